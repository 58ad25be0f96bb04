//! Skip-gram with negative sampling over walk co-occurrences.

use std::collections::HashMap;

use rand::Rng;

use crate::embedding::EmbeddingMatrix;
use crate::graph::NodeSet;

/// Input and context vectors. Row `i` of both belongs to the `i`-th node of
/// `input` in ascending id order.
#[derive(Clone, Debug, PartialEq)]
pub struct SkipGram {
    pub dim: usize,
    pub input: EmbeddingMatrix,
    pub context: Vec<f64>,
}

impl SkipGram {
    /// Input rows uniform in `[-0.5/d, 0.5/d]`, context rows zero.
    pub fn init(nodes: &NodeSet, dim: usize, rng: &mut impl Rng) -> Self {
        let half = 0.5 / dim as f64;
        let mut input = EmbeddingMatrix::zeros(nodes, dim);
        for x in input.as_mut_slice() {
            *x = rng.random_range(-half..half);
        }
        SkipGram {
            dim,
            context: vec![0.0; input.len() * dim],
            input,
        }
    }

    pub fn len(&self) -> usize {
        self.input.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input.is_empty()
    }

    pub fn input_row(&self, i: usize) -> &[f64] {
        self.input.row_at(i)
    }

    pub fn context_row(&self, i: usize) -> &[f64] {
        &self.context[i * self.dim..(i + 1) * self.dim]
    }
}

/// Gradient rows for the subset of rows a batch touched.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseGrad {
    dim: usize,
    slots: HashMap<usize, usize>,
    rows: Vec<usize>,
    data: Vec<f64>,
}

impl SparseGrad {
    pub fn new(dim: usize) -> Self {
        SparseGrad {
            dim,
            ..Default::default()
        }
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        let dim = self.dim;
        let slot = *self.slots.entry(row).or_insert_with(|| {
            self.rows.push(row);
            self.data.extend(std::iter::repeat_n(0.0, dim));
            self.rows.len() - 1
        });
        &mut self.data[slot * dim..(slot + 1) * dim]
    }

    pub fn row(&self, row: usize) -> Option<&[f64]> {
        self.slots
            .get(&row)
            .map(|&s| &self.data[s * self.dim..(s + 1) * self.dim])
    }

    /// Touched rows in first-touch order.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> + '_ {
        self.rows
            .iter()
            .enumerate()
            .map(|(s, &r)| (r, &self.data[s * self.dim..(s + 1) * self.dim]))
    }

    /// `params[row] -= step * grad[row]` for every touched row.
    pub fn apply(&self, params: &mut [f64], step: f64) {
        for (row, g) in self.iter() {
            let p = &mut params[row * self.dim..(row + 1) * self.dim];
            for (x, gi) in p.iter_mut().zip(g) {
                *x -= step * gi;
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SgnsGradients {
    pub input: SparseGrad,
    pub context: SparseGrad,
}

/// Draws nodes with probability proportional to `count^0.75`.
#[derive(Clone, Debug)]
pub struct NegativeSampler {
    cumulative: Vec<f64>,
}

impl NegativeSampler {
    pub const POWER: f64 = 0.75;

    pub fn from_counts(counts: &[u64]) -> Self {
        let mut total = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                total += (c as f64).powf(Self::POWER);
                total
            })
            .collect();
        NegativeSampler { cumulative }
    }

    /// Unigram counts of local node indices over a walk corpus.
    pub fn from_walks(n: usize, walks: &[Vec<usize>]) -> Self {
        let mut counts = vec![0u64; n];
        for w in walks {
            for &v in w {
                counts[v] += 1;
            }
        }
        Self::from_counts(&counts)
    }

    pub fn probability(&self, i: usize) -> f64 {
        let total = *self.cumulative.last().unwrap_or(&0.0);
        let lo = if i == 0 { 0.0 } else { self.cumulative[i - 1] };
        (self.cumulative[i] - lo) / total
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().expect("sampler over no nodes");
        let r = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= r)
            .min(self.cumulative.len() - 1)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(sigmoid(x))` without overflow.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Mean SGNS loss of a batch of `(center, context)` pairs and its gradient.
///
/// `negatives` holds `negatives.len() / batch.len()` pre-drawn negative
/// contexts per pair, pair-major. An empty batch has zero loss and no
/// gradient.
pub fn sgns_batch_loss(
    model: &SkipGram,
    batch: &[(usize, usize)],
    negatives: &[usize],
) -> (f64, SgnsGradients) {
    let dim = model.dim;
    let mut grads = SgnsGradients {
        input: SparseGrad::new(dim),
        context: SparseGrad::new(dim),
    };
    if batch.is_empty() {
        return (0.0, grads);
    }
    assert_eq!(negatives.len() % batch.len(), 0, "uneven negatives per pair");
    let k = negatives.len() / batch.len();
    let inv = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut center_grad = vec![0.0; dim];

    for (i, &(c, o)) in batch.iter().enumerate() {
        let u = model.input_row(c);
        center_grad.iter_mut().for_each(|g| *g = 0.0);

        let mut term = |target: usize, label: f64, grads: &mut SgnsGradients, center_grad: &mut [f64]| {
            let v = model.context_row(target);
            let score = dot(u, v);
            // d/dscore of -log sigmoid(+-score)
            let coef = if label > 0.0 {
                loss -= log_sigmoid(score);
                sigmoid(score) - 1.0
            } else {
                loss -= log_sigmoid(-score);
                sigmoid(score)
            } * inv;
            for (g, vi) in center_grad.iter_mut().zip(v) {
                *g += coef * vi;
            }
            let gv = grads.context.row_mut(target);
            for (g, ui) in gv.iter_mut().zip(u) {
                *g += coef * ui;
            }
        };

        term(o, 1.0, &mut grads, &mut center_grad);
        for &neg in &negatives[i * k..(i + 1) * k] {
            term(neg, -1.0, &mut grads, &mut center_grad);
        }
        for (g, cg) in grads.input.row_mut(c).iter_mut().zip(&center_grad) {
            *g += cg;
        }
    }
    (loss * inv, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_model(n: usize, dim: usize, seed: u64) -> SkipGram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<(usize, Vec<f64>)> = (0..n)
            .map(|v| (v, (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        SkipGram {
            dim,
            input: EmbeddingMatrix::from_rows(dim, rows).unwrap(),
            context: (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }

    #[test]
    fn orthogonal_pairs_cost_two_log_two() {
        let model = SkipGram {
            dim: 2,
            input: EmbeddingMatrix::from_rows(2, vec![(0, vec![1.0, 0.0]), (1, vec![0.5, 0.5])]).unwrap(),
            context: vec![0.0; 4],
        };
        let (loss, _) = sgns_batch_loss(&model, &[(0, 1), (1, 0)], &[1, 0]);
        assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        assert!((loss - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn empty_batch() {
        let model = random_model(3, 2, 1);
        let (loss, grads) = sgns_batch_loss(&model, &[], &[]);
        assert_eq!(loss, 0.0);
        assert!(grads.input.is_empty() && grads.context.is_empty());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..10 {
            let model = random_model(4, 3, seed);
            let batch = [(0, 1), (2, 3), (1, 0), (0, 1)];
            let negatives = [2, 3, 0, 1, 3, 2, 1, 1];
            let (_, grads) = sgns_batch_loss(&model, &batch, &negatives);
            let h = 1e-5;
            let mut worst: f64 = 0.0;
            for which in 0..2 {
                for idx in 0..model.context.len() {
                    let mut plus = model.clone();
                    let mut minus = model.clone();
                    let (p, m) = if which == 0 {
                        (plus.input.as_mut_slice(), minus.input.as_mut_slice())
                    } else {
                        (plus.context.as_mut_slice(), minus.context.as_mut_slice())
                    };
                    p[idx] += h;
                    m[idx] -= h;
                    let fd = (sgns_batch_loss(&plus, &batch, &negatives).0
                        - sgns_batch_loss(&minus, &batch, &negatives).0)
                        / (2.0 * h);
                    let g = if which == 0 { &grads.input } else { &grads.context };
                    let a = g.row(idx / 3).map_or(0.0, |r| r[idx % 3]);
                    worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-4));
                }
            }
            assert!(worst < 1e-5, "seed {seed}: {worst}");
        }
    }

    #[test]
    fn small_step_decreases_batch_loss() {
        let mut model = random_model(5, 4, 7);
        let batch = [(0, 1), (1, 2), (3, 4)];
        let negatives = [4, 3, 2];
        let (before, grads) = sgns_batch_loss(&model, &batch, &negatives);
        grads.input.apply(model.input.as_mut_slice(), 1e-3);
        grads.context.apply(&mut model.context, 1e-3);
        let (after, _) = sgns_batch_loss(&model, &batch, &negatives);
        assert!(after < before);
    }

    #[test]
    fn sampler_follows_smoothed_unigram() {
        let sampler = NegativeSampler::from_counts(&[16, 1, 0]);
        let p0 = sampler.probability(0);
        assert!((p0 - 8.0 / 9.0).abs() < 1e-12);
        assert_eq!(sampler.probability(2), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 20_000;
        let zeros = (0..n).filter(|_| sampler.sample(&mut rng) == 0).count();
        assert!((zeros as f64 / n as f64 - p0).abs() < 0.01);
        assert!((0..1000).all(|_| sampler.sample(&mut rng) != 2));
    }
}
