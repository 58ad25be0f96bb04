//! Orthogonal Procrustes alignment applied after training.

use std::io::{BufRead, Write};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::graph::NodeSet;
use crate::linalg::{svd, DenseMatrix};

/// A d×d orthogonal matrix acting on row vectors from the right.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthogonalMap {
    matrix: DenseMatrix,
}

impl OrthogonalMap {
    pub fn identity(dim: usize) -> Self {
        OrthogonalMap {
            matrix: DenseMatrix::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    /// `‖QᵀQ − I‖_F`.
    pub fn orthogonality_error(&self) -> f64 {
        self.matrix
            .transpose_matmul(&self.matrix)
            .expect("square")
            .sub(&DenseMatrix::identity(self.dim()))
            .frobenius()
    }

    /// `‖Q − I‖_F`.
    pub fn distance_from_identity(&self) -> f64 {
        self.matrix.sub(&DenseMatrix::identity(self.dim())).frobenius()
    }

    pub fn apply_row(&self, row: &[f64], out: &mut [f64]) {
        let d = self.dim();
        out.iter_mut().for_each(|x| *x = 0.0);
        for (k, &a) in row.iter().enumerate() {
            for (x, &q) in out.iter_mut().zip(&self.matrix.as_slice()[k * d..(k + 1) * d]) {
                *x += a * q;
            }
        }
    }

    /// Every row of `emb` multiplied by Q.
    pub fn apply(&self, emb: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        if emb.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: emb.dim(),
            });
        }
        let mut out = emb.clone();
        for i in 0..emb.len() {
            self.apply_row(emb.row_at(i), out.row_at_mut(i));
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for i in 0..self.dim() {
            let cells: Vec<String> = self.matrix.row(i).iter().map(|x| x.to_string()).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut data = Vec::new();
        let mut rows = 0;
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Format(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            for cell in line.split(',') {
                data.push(cell.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno + 1,
                    message: e.to_string(),
                })?);
            }
            rows += 1;
        }
        let matrix = DenseMatrix::from_vec(rows, rows, data)
            .map_err(|_| Error::Format("orthogonal map is not square".into()))?;
        Ok(OrthogonalMap { matrix })
    }
}

/// `argmin_Q ‖source·Q − target‖_F` over orthogonal Q, reflections included.
pub fn orthogonal_procrustes(source: &DenseMatrix, target: &DenseMatrix) -> Result<OrthogonalMap> {
    if source.rows() == 0 {
        return Err(Error::Contract("procrustes needs at least one row".into()));
    }
    if (source.rows(), source.cols()) != (target.rows(), target.cols()) {
        return Err(Error::DimensionMismatch {
            expected: source.rows() * source.cols(),
            found: target.rows() * target.cols(),
        });
    }
    if !source.is_finite() || !target.is_finite() {
        return Err(Error::NonFinite);
    }
    let cross = source.transpose_matmul(target)?;
    let s = svd(&cross)?;
    let matrix = s.u.matmul(&s.v.transpose())?;
    Ok(OrthogonalMap { matrix })
}

fn stack(emb: &EmbeddingMatrix, subset: &NodeSet) -> Result<DenseMatrix> {
    let rows = subset
        .iter()
        .map(|&v| emb.try_row(v))
        .collect::<Result<Vec<_>>>()?;
    DenseMatrix::from_rows(emb.dim(), rows)
}

/// The map that best rotates `cur`'s subset rows onto `anchor`'s.
pub fn fit_posthoc(
    cur: &EmbeddingMatrix,
    anchor: &EmbeddingMatrix,
    subset: &NodeSet,
) -> Result<OrthogonalMap> {
    if subset.is_empty() {
        return Err(Error::Contract("post-hoc alignment subset is empty".into()));
    }
    if cur.dim() != anchor.dim() {
        return Err(Error::DimensionMismatch {
            expected: anchor.dim(),
            found: cur.dim(),
        });
    }
    orthogonal_procrustes(&stack(cur, subset)?, &stack(anchor, subset)?)
}

/// Fits Q on `subset` and applies it to every row of `cur`.
pub fn align_posthoc(
    cur: &EmbeddingMatrix,
    anchor: &EmbeddingMatrix,
    subset: &NodeSet,
) -> Result<EmbeddingMatrix> {
    fit_posthoc(cur, anchor, subset)?.apply(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        DenseMatrix::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn random_embedding(n: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EmbeddingMatrix::from_rows(
            dim,
            (0..n).map(|v| (v, (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())),
        )
        .unwrap()
    }

    /// Gram-Schmidt QR of a random square matrix.
    fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        let m = random_matrix(d, d, rng);
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for j in 0..d {
            let mut c: Vec<f64> = (0..d).map(|i| m.get(i, j)).collect();
            for q in &cols {
                let p: f64 = c.iter().zip(q).map(|(a, b)| a * b).sum();
                c.iter_mut().zip(q).for_each(|(a, b)| *a -= p * b);
            }
            let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            cols.push(c.into_iter().map(|x| x / norm).collect());
        }
        let mut r = DenseMatrix::zeros(d, d);
        for (j, c) in cols.iter().enumerate() {
            for (i, &x) in c.iter().enumerate() {
                r.set(i, j, x);
            }
        }
        r
    }

    #[test]
    fn self_alignment_is_identity_on_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_matrix(30, 6, &mut rng);
        let q = orthogonal_procrustes(&s, &s).unwrap();
        assert!(s.matmul(q.matrix()).unwrap().sub(&s).frobenius() < 1e-8);
    }

    #[test]
    fn recovers_random_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_matrix(200, 32, &mut rng);
        let r = random_orthogonal(32, &mut rng);
        let t = s.matmul(&r).unwrap();
        let q = orthogonal_procrustes(&s, &t).unwrap();
        assert!(s.matmul(q.matrix()).unwrap().sub(&t).frobenius() < 1e-6);
        assert!(q.orthogonality_error() < 1e-8);
        assert!((q.matrix().determinant().abs() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn one_dimensional_reflection() {
        let s = DenseMatrix::from_vec(2, 1, vec![1.0, 2.0]).unwrap();
        let t = DenseMatrix::from_vec(2, 1, vec![-1.0, -2.0]).unwrap();
        let q = orthogonal_procrustes(&s, &t).unwrap();
        assert!((q.matrix().get(0, 0) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_dimensional_matches_angle_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let s = random_matrix(20, 2, &mut rng);
            let t = random_matrix(20, 2, &mut rng);
            let q = orthogonal_procrustes(&s, &t).unwrap();
            let residual = s.matmul(q.matrix()).unwrap().sub(&t).frobenius();
            let steps = (2.0 * std::f64::consts::PI / 1e-4) as usize;
            let mut best = f64::INFINITY;
            for k in 0..steps {
                let th = k as f64 * 1e-4;
                let (c, sn) = (th.cos(), th.sin());
                for m in [
                    [c, -sn, sn, c],
                    [c, sn, sn, -c],
                ] {
                    let cand = DenseMatrix::from_vec(2, 2, m.to_vec()).unwrap();
                    best = best.min(s.matmul(&cand).unwrap().sub(&t).frobenius());
                }
            }
            assert!(residual <= best + 1e-6, "{residual} vs {best}");
            assert!(best - residual < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let s = DenseMatrix::from_vec(1, 2, vec![1.0, f64::NAN]).unwrap();
        assert!(matches!(orthogonal_procrustes(&s, &s), Err(Error::NonFinite)));
        let e = DenseMatrix::zeros(0, 2);
        assert!(orthogonal_procrustes(&e, &e).is_err());
        let a = random_embedding(4, 3, 0);
        assert!(align_posthoc(&a, &a, &NodeSet::new()).is_err());
        assert!(matches!(
            align_posthoc(&a, &a, &NodeSet::from([0, 9])),
            Err(Error::MissingNode(9))
        ));
    }

    #[test]
    fn aligned_rows_match_anchor() {
        let anchor = random_embedding(50, 8, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = OrthogonalMap {
            matrix: random_orthogonal(8, &mut rng),
        };
        let cur = r.apply(&anchor).unwrap();
        let all = anchor.node_set();
        let out = align_posthoc(&cur, &anchor, &all).unwrap();
        assert!(out.max_abs_diff(&anchor).unwrap() < 1e-6);
        let same = align_posthoc(&anchor, &anchor, &all).unwrap();
        assert!(same.max_abs_diff(&anchor).unwrap() < 1e-8);
    }

    #[test]
    fn subset_map_applies_to_every_row() {
        let anchor = random_embedding(30, 4, 6);
        let cur = random_embedding(30, 4, 7);
        let subset: NodeSet = (0..10).collect();
        let q = fit_posthoc(&cur, &anchor, &subset).unwrap();
        let out = align_posthoc(&cur, &anchor, &subset).unwrap();
        let mut expect = vec![0.0; 4];
        for (v, row) in cur.iter() {
            q.apply_row(row, &mut expect);
            assert_eq!(out.row(v).unwrap(), expect.as_slice());
        }
        assert_eq!(cur, random_embedding(30, 4, 7));
    }

    #[test]
    fn csv_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = OrthogonalMap {
            matrix: random_orthogonal(5, &mut rng),
        };
        let mut buf = Vec::new();
        q.write_csv(&mut buf).unwrap();
        assert_eq!(OrthogonalMap::read_csv(buf.as_slice()).unwrap(), q);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn residual_never_increases_and_refit_is_identity(
            n in 1usize..40,
            d in 1usize..7,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_matrix(n, d, &mut rng);
            let t = random_matrix(n, d, &mut rng);
            let q = orthogonal_procrustes(&s, &t).unwrap();
            prop_assert!(q.orthogonality_error() < 1e-8);
            prop_assert!((q.matrix().determinant().abs() - 1.0).abs() < 1e-6);
            let before = s.sub(&t).frobenius();
            let aligned = s.matmul(q.matrix()).unwrap();
            prop_assert!(aligned.sub(&t).frobenius() <= before + 1e-9);
            if n >= d + 2 {
                let again = orthogonal_procrustes(&aligned, &t).unwrap();
                prop_assert!(again.distance_from_identity() < 1e-6);
            }
        }
    }
}
