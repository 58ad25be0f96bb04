//! Node2Vec: biased random walks and skip-gram training with negative
//! sampling, with an optional alignment regularizer attached per batch.

mod sgns;
mod walk;

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use sgns::{sgns_batch_loss, NegativeSampler, SgnsGradients, SkipGram, SparseGrad};
pub use walk::{generate_walks, WalkSet};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::rafen::{AlignmentScope, LossScaler, Regularizer, Weighting};
use crate::graph::Snapshot;
use crate::seed;

/// Learning rates never decay below this fraction of the initial rate.
const MIN_LR_FRACTION: f64 = 1e-4;

/// Walk and skip-gram hyperparameters.
///
/// `learning_rate` is a per-pair rate: a batch step moves parameters by
/// `learning_rate * batch_len` times the gradient of the batch-mean loss,
/// which matches classic per-pair SGD in magnitude. It decays linearly over
/// all pairs of all epochs.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    pub walk_length: usize,
    pub walks_per_node: usize,
    /// Return parameter.
    pub p: f64,
    /// In-out parameter.
    pub q: f64,
    pub use_weights: bool,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Start common nodes from the previous snapshot's rows.
    pub warm_start: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 128,
            walk_length: 80,
            walks_per_node: 10,
            p: 1.0,
            q: 1.0,
            use_weights: false,
            window: 10,
            negatives: 5,
            epochs: 5,
            batch_size: 256,
            learning_rate: 0.025,
            seed: 0,
            warm_start: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("dim", self.dim),
            ("walk_length", self.walk_length),
            ("walks_per_node", self.walks_per_node),
            ("window", self.window),
            ("negatives", self.negatives),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.p > 0.0 && self.q > 0.0) {
            return Err(Error::Config("p and q must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub batch: usize,
    pub model_raw: f64,
    pub alignment_raw: f64,
    pub model_scaled: f64,
    pub alignment_scaled: f64,
    pub combined: f64,
}

/// Per-batch loss history of one training run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTrace {
    pub records: Vec<LossRecord>,
}

impl LossTrace {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "batch,model_raw,alignment_raw,model_scaled,alignment_scaled,combined"
        )?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.batch, r.model_raw, r.alignment_raw, r.model_scaled, r.alignment_scaled, r.combined
            )?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn window_pairs(len: usize, window: usize) -> usize {
    (0..len)
        .map(|i| i.min(window) + (len - 1 - i).min(window))
        .sum()
}

/// Trains Node2Vec embeddings of `snap`.
///
/// With a regularizer, each batch minimizes the first-batch-scaled
/// combination of the skip-gram loss and the alignment loss; without one it
/// minimizes the raw skip-gram loss. Single-threaded runs with the same seed
/// are bit-identical.
pub fn train(
    snap: &Snapshot,
    cfg: &TrainConfig,
    regularizer: Option<&dyn Regularizer>,
    init: Option<&EmbeddingMatrix>,
) -> Result<(EmbeddingMatrix, LossTrace)> {
    cfg.validate()?;
    if snap.is_empty() {
        return Err(Error::Contract("cannot train on an empty snapshot".into()));
    }

    let graph = walk::WalkGraph::new(snap);
    let walks = walk::generate_local(&graph, cfg);
    let n = graph.ids.len();
    let sampler = NegativeSampler::from_walks(n, &walks);

    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, &[0x7ea1]));
    let mut model = SkipGram::init(snap.nodes(), cfg.dim, &mut rng);
    if let Some(init) = init {
        if init.dim() != cfg.dim {
            return Err(Error::DimensionMismatch {
                expected: cfg.dim,
                found: init.dim(),
            });
        }
        for (i, &v) in graph.ids.iter().enumerate() {
            if let Some(row) = init.row(v) {
                model.input.row_at_mut(i).copy_from_slice(row);
            }
        }
    }

    let aligned: Vec<usize> = match regularizer {
        Some(reg) => reg
            .nodes()
            .iter()
            .map(|&v| {
                model.input.position(v).ok_or_else(|| {
                    Error::Contract(format!("aligned node {v} is not in the trained snapshot"))
                })
            })
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };
    let weighting = regularizer.map_or(Weighting::Alpha(0.0), |r| r.weighting());
    let batch_scope = regularizer.is_some_and(|r| r.scope() == AlignmentScope::Batch);

    let d = cfg.dim;
    let k = cfg.negatives;
    let total_pairs =
        cfg.epochs * walks.iter().map(|w| window_pairs(w.len(), cfg.window)).sum::<usize>();
    let mut scaler = LossScaler::new();
    let mut trace = LossTrace::default();
    let mut align_grad = vec![0.0; if regularizer.is_some() { n * d } else { 0 }];
    let mut in_batch = vec![false; if batch_scope { n } else { 0 }];
    let mut batch: Vec<(usize, usize)> = Vec::with_capacity(cfg.batch_size);
    let mut negatives: Vec<usize> = Vec::with_capacity(cfg.batch_size * k);
    let mut processed = 0usize;
    let mut order: Vec<usize> = (0..walks.len()).collect();

    let mut step = |batch: &mut Vec<(usize, usize)>,
                    model: &mut SkipGram,
                    rng: &mut ChaCha8Rng,
                    trace: &mut LossTrace,
                    processed: &mut usize|
     -> Result<()> {
        if batch.is_empty() {
            return Ok(());
        }
        negatives.clear();
        for _ in 0..batch.len() * k {
            negatives.push(sampler.sample(rng));
        }
        let (model_loss, grads) = sgns_batch_loss(model, batch, &negatives);
        let index = trace.records.len();
        let check = |value: f64, term: &'static str| {
            if value.is_finite() {
                Ok(())
            } else {
                Err(Error::Diverged {
                    batch: index,
                    term,
                    value,
                })
            }
        };
        check(model_loss, "model")?;

        let progress = *processed as f64 / total_pairs.max(1) as f64;
        let lr = cfg.learning_rate * (1.0 - progress).max(MIN_LR_FRACTION);
        let eta = lr * batch.len() as f64;

        match regularizer {
            None => {
                trace.records.push(LossRecord {
                    batch: index,
                    model_raw: model_loss,
                    alignment_raw: 0.0,
                    model_scaled: model_loss,
                    alignment_scaled: 0.0,
                    combined: model_loss,
                });
                grads.input.apply(model.input.as_mut_slice(), eta);
                grads.context.apply(&mut model.context, eta);
            }
            Some(reg) => {
                let restrict = if batch_scope {
                    in_batch.iter_mut().for_each(|f| *f = false);
                    for &(c, o) in batch.iter() {
                        in_batch[c] = true;
                        in_batch[o] = true;
                    }
                    for &neg in &negatives {
                        in_batch[neg] = true;
                    }
                    Some(in_batch.as_slice())
                } else {
                    None
                };
                let align_loss = reg.accumulate(&model.input, restrict, &mut align_grad)?;
                check(align_loss, "alignment")?;
                let parts = scaler.combine(model_loss, align_loss, weighting);
                check(parts.combined, "combined")?;
                trace.records.push(LossRecord {
                    batch: index,
                    model_raw: parts.model,
                    alignment_raw: parts.alignment,
                    model_scaled: parts.model_scaled,
                    alignment_scaled: parts.alignment_scaled,
                    combined: parts.combined,
                });
                grads
                    .input
                    .apply(model.input.as_mut_slice(), eta * parts.grad_model);
                grads.context.apply(&mut model.context, eta * parts.grad_model);
                let step_align = eta * parts.grad_alignment;
                for &pos in &aligned {
                    let g = &mut align_grad[pos * d..(pos + 1) * d];
                    for (x, gi) in model.input.row_at_mut(pos).iter_mut().zip(g.iter_mut()) {
                        *x -= step_align * *gi;
                        *gi = 0.0;
                    }
                }
            }
        }
        *processed += batch.len();
        batch.clear();
        Ok(())
    };

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &w in &order {
            let walk = &walks[w];
            for (i, &center) in walk.iter().enumerate() {
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window).min(walk.len() - 1);
                for (j, &ctx) in walk.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    batch.push((center, ctx));
                    if batch.len() == cfg.batch_size {
                        step(&mut batch, &mut model, &mut rng, &mut trace, &mut processed)?;
                    }
                }
            }
        }
        step(&mut batch, &mut model, &mut rng, &mut trace, &mut processed)?;
        if !model.input.is_finite() || model.context.iter().any(|x| !x.is_finite()) {
            log::error!("non-finite parameters after epoch {epoch}");
            return Err(Error::NonFinite);
        }
    }

    Ok((model.input, trace))
}
