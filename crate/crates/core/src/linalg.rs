//! Small dense matrices and a one-sided Jacobi SVD.

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows<'a>(cols: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut data = Vec::new();
        let mut n = 0;
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
            n += 1;
        }
        Ok(DenseMatrix { rows: n, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (x, &b) in dst.iter_mut().zip(other.row(k)) {
                    *x += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn transpose_matmul(&self, other: &DenseMatrix) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: other.rows,
            });
        }
        let mut out = Self::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let b = other.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (x, &bj) in dst.iter_mut().zip(b) {
                    *x += a * bj;
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Determinant by partial-pivot elimination.
    pub fn determinant(&self) -> f64 {
        assert_eq!(self.rows, self.cols, "determinant of a non-square matrix");
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for c in 0..n {
            let pivot = (c..n)
                .max_by(|&x, &y| a[x * n + c].abs().total_cmp(&a[y * n + c].abs()))
                .unwrap();
            if a[pivot * n + c] == 0.0 {
                return 0.0;
            }
            if pivot != c {
                for j in 0..n {
                    a.swap(pivot * n + j, c * n + j);
                }
                det = -det;
            }
            let p = a[c * n + c];
            det *= p;
            for r in c + 1..n {
                let f = a[r * n + c] / p;
                for j in c..n {
                    a[r * n + j] -= f * a[c * n + j];
                }
            }
        }
        det
    }
}

/// `m = U · diag(singular) · Vᵀ` for a square `m`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DenseMatrix,
    pub singular: Vec<f64>,
    pub v: DenseMatrix,
    pub sweeps: usize,
}

pub const JACOBI_TOLERANCE: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 60;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One-sided Jacobi SVD of a square matrix.
///
/// Columns are rotated pairwise until every pair is orthogonal to within
/// `JACOBI_TOLERANCE` relative to their norms. Columns that end up
/// numerically zero get left singular vectors completed by Gram-Schmidt, so
/// `u` is orthogonal even when `m` is rank deficient.
pub fn svd(m: &DenseMatrix) -> Result<Svd> {
    if m.rows != m.cols {
        return Err(Error::DimensionMismatch {
            expected: m.rows,
            found: m.cols,
        });
    }
    if !m.is_finite() {
        return Err(Error::NonFinite);
    }
    let n = m.rows;
    // column-major working copies
    let mut a: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| m.get(i, j)).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut sweeps = 0;
    while sweeps < JACOBI_MAX_SWEEPS {
        sweeps += 1;
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let alpha = dot(&a[i], &a[i]);
                let beta = dot(&a[j], &a[j]);
                let gamma = dot(&a[i], &a[j]);
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOLERANCE * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for cols in [&mut a, &mut v] {
                    let (left, right) = cols.split_at_mut(j);
                    for (x, y) in left[i].iter_mut().zip(right[0].iter_mut()) {
                        let (xi, yi) = (*x, *y);
                        *x = c * xi - s * yi;
                        *y = s * xi + c * yi;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let singular: Vec<f64> = a.iter().map(|col| dot(col, col).sqrt()).collect();
    let largest = singular.iter().cloned().fold(0.0, f64::max);
    let cutoff = largest * n as f64 * f64::EPSILON;
    let mut u_cols: Vec<Option<Vec<f64>>> = a
        .iter()
        .zip(&singular)
        .map(|(col, &s)| (s > cutoff && s > 0.0).then(|| col.iter().map(|x| x / s).collect()))
        .collect();
    complete_basis(&mut u_cols, n);

    let mut u = DenseMatrix::zeros(n, n);
    let mut vm = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let col = u_cols[j].as_ref().expect("basis completed");
        for i in 0..n {
            u.set(i, j, col[i]);
            vm.set(i, j, v[j][i]);
        }
    }
    Ok(Svd {
        u,
        singular,
        v: vm,
        sweeps,
    })
}

/// Fills missing columns with unit vectors orthogonal to all present ones.
fn complete_basis(cols: &mut [Option<Vec<f64>>], n: usize) {
    for j in 0..n {
        if cols[j].is_some() {
            continue;
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            // two passes of classical Gram-Schmidt
            for _ in 0..2 {
                for q in cols.iter().flatten() {
                    let proj = dot(&e, q);
                    for (x, qi) in e.iter_mut().zip(q) {
                        *x -= proj * qi;
                    }
                }
            }
            let norm = dot(&e, &e).sqrt();
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                best = Some((norm, e));
            }
        }
        let (norm, e) = best.expect("n > 0");
        cols[j] = Some(e.into_iter().map(|x| x / norm).collect());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_vec(n, n, (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
    }

    fn orthogonality_error(m: &DenseMatrix) -> f64 {
        m.transpose_matmul(m)
            .unwrap()
            .sub(&DenseMatrix::identity(m.cols()))
            .frobenius()
    }

    fn reconstruct(s: &Svd) -> DenseMatrix {
        let n = s.singular.len();
        let mut us = s.u.clone();
        for i in 0..n {
            for j in 0..n {
                us.set(i, j, us.get(i, j) * s.singular[j]);
            }
        }
        us.matmul(&s.v.transpose()).unwrap()
    }

    #[test]
    fn reconstructs_random_matrices() {
        for (n, seed) in [(1, 0), (2, 1), (5, 2), (16, 3), (32, 4)] {
            let m = random(n, seed);
            let s = svd(&m).unwrap();
            assert!(reconstruct(&s).sub(&m).frobenius() < 1e-10);
            assert!(orthogonality_error(&s.u) < 1e-10);
            assert!(orthogonality_error(&s.v) < 1e-10);
            assert!(s.sweeps < JACOBI_MAX_SWEEPS);
        }
    }

    #[test]
    fn rank_deficient_input_still_gives_orthogonal_factors() {
        let mut m = DenseMatrix::zeros(4, 4);
        for j in 0..4 {
            m.set(0, j, 1.0 + j as f64);
            m.set(1, j, 2.0 * (1.0 + j as f64));
        }
        let s = svd(&m).unwrap();
        assert!(reconstruct(&s).sub(&m).frobenius() < 1e-10);
        assert!(orthogonality_error(&s.u) < 1e-10);
        let zero = svd(&DenseMatrix::zeros(3, 3)).unwrap();
        assert!(orthogonality_error(&zero.u) < 1e-12);
    }

    #[test]
    fn rejects_nan() {
        let mut m = DenseMatrix::identity(2);
        m.set(0, 1, f64::NAN);
        assert!(matches!(svd(&m), Err(Error::NonFinite)));
    }

    #[test]
    fn determinant_by_hand() {
        let m = DenseMatrix::from_vec(2, 2, vec![0.0, 2.0, 3.0, 1.0]).unwrap();
        assert_eq!(m.determinant(), -6.0);
        assert_eq!(DenseMatrix::identity(3).determinant(), 1.0);
    }
}
