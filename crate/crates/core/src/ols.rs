//! Least squares through a Householder QR that processes columns in their
//! given order and drops any column whose residual norm after projection on
//! the earlier retained columns falls below a relative tolerance.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Relative pivot tolerance for declaring a column collinear.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct OlsFit {
    /// Design column indices that were kept, ascending.
    pub retained: Vec<usize>,
    /// Coefficients aligned with `retained`.
    pub coef: Vec<f64>,
    /// Covariance of `coef`, `sigma2 · (XᵀX)⁻¹` over the retained columns.
    #[serde(skip)]
    pub vcov: DMatrix<f64>,
    pub sigma2: f64,
    pub rss: f64,
    pub dof: usize,
    pub dropped_columns: Vec<usize>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl OlsFit {
    fn position(&self, column: usize) -> Option<usize> {
        self.retained.iter().position(|&c| c == column)
    }

    pub fn coefficient(&self, column: usize) -> Option<f64> {
        self.position(column).map(|k| self.coef[k])
    }

    pub fn covariance(&self, a: usize, b: usize) -> Option<f64> {
        Some(self.vcov[(self.position(a)?, self.position(b)?)])
    }

    pub fn rank(&self) -> usize {
        self.retained.len()
    }

    /// Fails with `RankDeficientDesign` unless every column in `columns` survived.
    pub fn ensure_retained(&self, columns: &[usize], what: &str) -> Result<()> {
        match columns.iter().find(|c| self.position(**c).is_none()) {
            Some(c) => Err(Error::RankDeficientDesign(format!("{what} column {c} is collinear with earlier columns"))),
            None => Ok(()),
        }
    }
}

pub fn fit_ols(y: &[f64], design: &DMatrix<f64>) -> Result<OlsFit> {
    let n = design.nrows();
    let m = design.ncols();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    let mut a = design.clone();
    let mut qty = DVector::from_column_slice(y);
    let col_norms: Vec<f64> = (0..m).map(|j| a.column(j).norm()).collect();
    let mut retained = Vec::new();
    let mut dropped = Vec::new();

    for j in 0..m {
        let r = retained.len();
        if r == n {
            dropped.push(j);
            continue;
        }
        let tail_norm = a.view((r, j), (n - r, 1)).norm();
        if col_norms[j] == 0.0 || tail_norm <= RANK_TOLERANCE * col_norms[j] {
            dropped.push(j);
            continue;
        }
        // Householder vector v with H = I - 2 v vᵀ / (vᵀv) mapping a[r.., j] to alpha·e1.
        let x0 = a[(r, j)];
        let alpha = if x0 >= 0.0 { -tail_norm } else { tail_norm };
        let mut v: Vec<f64> = (r..n).map(|i| a[(i, j)]).collect();
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|e| e * e).sum();
        if vtv > 0.0 {
            for c in j..m {
                let dot: f64 = v.iter().enumerate().map(|(k, vk)| vk * a[(r + k, c)]).sum();
                let f = 2.0 * dot / vtv;
                for (k, vk) in v.iter().enumerate() {
                    a[(r + k, c)] -= f * vk;
                }
            }
            let dot: f64 = v.iter().enumerate().map(|(k, vk)| vk * qty[r + k]).sum();
            let f = 2.0 * dot / vtv;
            for (k, vk) in v.iter().enumerate() {
                qty[r + k] -= f * vk;
            }
        }
        retained.push(j);
    }

    let rank = retained.len();
    if n <= rank {
        return Err(Error::InsufficientRows { rows: n, columns: rank });
    }
    let r_mat = DMatrix::from_fn(rank, rank, |i, c| if i <= c { a[(i, retained[c])] } else { 0.0 });
    let rhs = DVector::from_iterator(rank, (0..rank).map(|i| qty[i]));
    let coef = r_mat
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::RankDeficientDesign("singular triangular factor".into()))?;
    let r_inv = r_mat
        .solve_upper_triangular(&DMatrix::identity(rank, rank))
        .ok_or_else(|| Error::RankDeficientDesign("singular triangular factor".into()))?;

    let mut residuals = y.to_vec();
    for (k, &col) in retained.iter().enumerate() {
        for (i, res) in residuals.iter_mut().enumerate() {
            *res -= design[(i, col)] * coef[k];
        }
    }
    let rss: f64 = (rank..n).map(|i| qty[i] * qty[i]).sum();
    let dof = n - rank;
    let sigma2 = rss / dof as f64;
    let mut vcov = &r_inv * r_inv.transpose() * sigma2;
    // symmetrize away rounding
    for i in 0..rank {
        for c in 0..i {
            let s = 0.5 * (vcov[(i, c)] + vcov[(c, i)]);
            vcov[(i, c)] = s;
            vcov[(c, i)] = s;
        }
    }

    Ok(OlsFit {
        retained,
        coef: coef.iter().copied().collect(),
        vcov,
        sigma2,
        rss,
        dof,
        dropped_columns: dropped,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_fit() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let fit = fit_ols(&y, &DMatrix::from_column_slice(4, 1, &x)).unwrap();
        assert!((fit.coef[0] - 2.0).abs() < 1e-14);
        assert!(fit.sigma2.abs() < 1e-20);
        assert_eq!(fit.dof, 3);
    }

    #[test]
    fn duplicated_column_is_dropped() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 30;
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 + 3.0 * v + 0.1 * rng.random::<f64>()).collect();
        let single = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
        let doubled = DMatrix::from_fn(n, 3, |i, j| if j == 0 { 1.0 } else { x[i] });
        let a = fit_ols(&y, &single).unwrap();
        let b = fit_ols(&y, &doubled).unwrap();
        assert_eq!(b.dropped_columns, vec![2]);
        for (u, v) in a.coef.iter().zip(&b.coef) {
            assert!((u - v).abs() < 1e-12);
        }
        assert!(b.ensure_retained(&[0, 1], "x").is_ok());
        assert!(matches!(b.ensure_retained(&[2], "x"), Err(Error::RankDeficientDesign(_))));
    }

    #[test]
    fn too_few_rows() {
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(fit_ols(&[1.0, 2.0], &d), Err(Error::InsufficientRows { .. })));
    }

    #[test]
    fn zero_column_dropped() {
        let d = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let fit = fit_ols(&[1.0, 2.0, 3.0], &d).unwrap();
        assert_eq!(fit.dropped_columns, vec![1]);
        assert!((fit.coef[0] - 2.0).abs() < 1e-14);
    }
}
