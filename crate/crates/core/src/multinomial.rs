//! Baseline-category multinomial logit, `log(P(T=t)/P(T=Z)) = a_t + γ_tᵀx`,
//! with the last level as reference.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::optim::{newton_maximize, Evaluation};
use crate::ordinal::check_design_rank;
use crate::standardize::{raw_rows, Standardizer};
use crate::util::serialize_matrix;
use crate::CategoryModel;

pub const GRADIENT_TOLERANCE: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 200;
pub const SEPARATION_THRESHOLD: f64 = 50.0;

#[derive(Debug, Clone, Serialize)]
pub struct MultinomialFit {
    pub columns: Vec<usize>,
    /// One row per non-reference level: `[intercept, γ_1, …, γ_p]`.
    pub gamma: Vec<Vec<f64>>,
    pub loglik: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Covariance of the flattened `gamma` (row-major).
    #[serde(serialize_with = "serialize_matrix")]
    pub vcov: DMatrix<f64>,
    #[serde(skip)]
    pub loglik_trace: Vec<f64>,
}

impl MultinomialFit {
    pub fn from_parameters(columns: Vec<usize>, gamma: Vec<Vec<f64>>) -> Result<Self> {
        if gamma.is_empty() {
            return Err(Error::invalid("need at least one non-reference level"));
        }
        let width = columns.len() + 1;
        if let Some(row) = gamma.iter().find(|r| r.len() != width) {
            return Err(Error::DimensionMismatch { expected: width, got: row.len() });
        }
        let q = gamma.len() * width;
        Ok(MultinomialFit {
            columns,
            gamma,
            loglik: f64::NAN,
            grad_norm: f64::NAN,
            iterations: 0,
            converged: true,
            vcov: DMatrix::zeros(q, q),
            loglik_trace: Vec::new(),
        })
    }

    /// Standard error of coefficient `c` (0 = intercept) for level `t`.
    pub fn se(&self, t: usize, c: usize) -> f64 {
        let k = t * (self.columns.len() + 1) + c;
        self.vcov[(k, k)].sqrt()
    }
}

impl CategoryModel for MultinomialFit {
    fn columns(&self) -> &[usize] {
        &self.columns
    }

    fn levels(&self) -> usize {
        self.gamma.len() + 1
    }

    fn category_probs(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.columns.len(), "covariate arity");
        let mut eta: Vec<f64> = self
            .gamma
            .iter()
            .map(|g| g[0] + g[1..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        eta.push(0.0);
        softmax(&eta)
    }
}

fn softmax(eta: &[f64]) -> Vec<f64> {
    let m = eta.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e: Vec<f64> = eta.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn objective(rows: &[f64], t: &[usize], p: usize, z: usize, params: &[f64], hessian: bool) -> Option<Evaluation> {
    let w = p + 1;
    let q = (z - 1) * w;
    let mut loglik = 0.0;
    let mut grad = vec![0.0; q];
    // observed information (negative Hessian)
    let mut hess = hessian.then(|| DMatrix::<f64>::zeros(q, q));
    let mut xt = vec![0.0; w];
    let mut eta = vec![0.0; z];

    for (i, &level) in t.iter().enumerate() {
        xt[0] = 1.0;
        xt[1..].copy_from_slice(&rows[i * p..(i + 1) * p]);
        for k in 0..z - 1 {
            eta[k] = params[k * w..(k + 1) * w].iter().zip(&xt).map(|(a, b)| a * b).sum();
        }
        eta[z - 1] = 0.0;
        let m = eta.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + eta.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        if !lse.is_finite() {
            return None;
        }
        loglik += eta[level] - lse;
        let pi: Vec<f64> = eta.iter().map(|v| (v - lse).exp()).collect();
        for k in 0..z - 1 {
            let resid = f64::from(u8::from(level == k)) - pi[k];
            for c in 0..w {
                grad[k * w + c] += resid * xt[c];
            }
        }
        if let Some(h) = hess.as_mut() {
            for a in 0..z - 1 {
                for b in 0..=a {
                    let wt = if a == b { pi[a] * (1.0 - pi[a]) } else { -pi[a] * pi[b] };
                    for r in 0..w {
                        let xr = wt * xt[r];
                        for c in 0..w {
                            h[(a * w + r, b * w + c)] += xr * xt[c];
                        }
                    }
                }
            }
        }
    }
    if let Some(h) = hess.as_mut() {
        // fill upper blocks from lower
        for a in 0..z - 1 {
            for b in a + 1..z - 1 {
                for r in 0..w {
                    for c in 0..w {
                        h[(a * w + r, b * w + c)] = h[(b * w + c, a * w + r)];
                    }
                }
            }
        }
    }
    if !loglik.is_finite() {
        return None;
    }
    Some(Evaluation { loglik, grad, curvature: hess })
}

/// Negative log-likelihood and gradient at flattened `gamma`, original scale.
pub fn multinomial_negloglik_grad(params: &[f64], data: &Dataset, columns: &[usize]) -> Result<(f64, Vec<f64>)> {
    data.check_columns(columns)?;
    let p = columns.len();
    let z = data.levels();
    let expected = (z - 1) * (p + 1);
    if params.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: params.len() });
    }
    let rows = raw_rows(data, columns);
    match objective(&rows, data.treatment(), p, z, params, false) {
        Some(ev) => Ok((-ev.loglik, ev.grad.iter().map(|g| -g).collect())),
        None => Ok((f64::INFINITY, vec![f64::NAN; expected])),
    }
}

pub fn fit_multinomial_logit(data: &Dataset, columns: &[usize]) -> Result<MultinomialFit> {
    data.check_columns(columns)?;
    let (n, p, z) = (data.n(), columns.len(), data.levels());
    if n < p + z {
        return Err(Error::RankDeficientDesign(format!("{n} units cannot identify {p} covariates at {z} levels")));
    }
    let counts = data.level_counts();
    if let Some(level) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyLevel { level });
    }
    let scaler = Standardizer::fit(data, columns)?;
    let rows = scaler.transform(data, columns);
    check_design_rank(&rows, n, p)?;
    let t = data.treatment();
    let w = p + 1;

    let mut start = vec![0.0; (z - 1) * w];
    for k in 0..z - 1 {
        start[k * w] = (counts[k] as f64 / counts[z - 1] as f64).ln();
    }
    let eval = |params: &[f64], want: bool| objective(&rows, t, p, z, params, want);
    let guard = |params: &[f64]| {
        for k in 0..z - 1 {
            for c in 1..w {
                let g = params[k * w + c];
                if g.abs() > SEPARATION_THRESHOLD {
                    return Err(Error::SeparationDetected { column: columns[c - 1], magnitude: g.abs() });
                }
            }
        }
        Ok(())
    };
    let outcome = newton_maximize(start, GRADIENT_TOLERANCE, MAX_ITERATIONS, eval, guard)?;

    let info = objective(&rows, t, p, z, &outcome.params, true)
        .and_then(|ev| ev.curvature)
        .expect("finite at accepted iterate");
    let q = (z - 1) * w;
    let v_std = info
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| info.try_inverse())
        .ok_or_else(|| Error::RankDeficientDesign("singular information matrix at the optimum".into()))?;
    // intercept_t = a_t − Σ_j g_tj m_j / s_j ; γ_tj = g_tj / s_j
    let mut l = DMatrix::<f64>::zeros(q, q);
    for k in 0..z - 1 {
        l[(k * w, k * w)] = 1.0;
        for j in 0..p {
            l[(k * w, k * w + 1 + j)] = -scaler.mean[j] / scaler.scale[j];
            l[(k * w + 1 + j, k * w + 1 + j)] = 1.0 / scaler.scale[j];
        }
    }
    let vcov = &l * v_std * l.transpose();
    let flat = &l * nalgebra::DVector::from_column_slice(&outcome.params);
    let gamma: Vec<Vec<f64>> = (0..z - 1).map(|k| flat.as_slice()[k * w..(k + 1) * w].to_vec()).collect();

    let fit = MultinomialFit {
        columns: columns.to_vec(),
        gamma,
        loglik: outcome.loglik,
        grad_norm: outcome.grad_norm,
        iterations: outcome.iterations,
        converged: outcome.converged,
        vcov,
        loglik_trace: outcome.trace,
    };
    if fit.converged {
        Ok(fit)
    } else {
        Err(Error::NonConvergence { iterations: fit.iterations, grad_norm: fit.grad_norm, best: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn probabilities_normalized() {
        let fit = MultinomialFit::from_parameters(vec![0], vec![vec![0.3, 2.0], vec![-1.0, -4.0]]).unwrap();
        for x in [-30.0, -1.0, 0.0, 2.5, 40.0] {
            let pr = fit.category_probs(&[x]);
            assert!(pr.iter().all(|&v| v > 0.0));
            assert!((pr.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn intercept_only_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 3000;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>()]).collect();
        let t: Vec<usize> = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                if u < 0.2 {
                    0
                } else if u < 0.5 {
                    1
                } else {
                    2
                }
            })
            .collect();
        let data = Dataset::from_rows(vec![Column::numeric("x")], &rows, t, vec![0.0; n], 3).unwrap();
        let fit = fit_multinomial_logit(&data, &[0]).unwrap();
        let mean_x = 0.5;
        // log-odds at the covariate mean against the generating ratios
        for (k, target) in [(0usize, (0.2f64 / 0.5).ln()), (1, (0.3f64 / 0.5).ln())] {
            let at_mean = fit.gamma[k][0] + fit.gamma[k][1] * mean_x;
            assert!((at_mean - target).abs() < 3.0 * fit.se(k, 0) + 0.02, "{at_mean} vs {target}");
            assert!(fit.gamma[k][1].abs() < 3.0 * fit.se(k, 1));
        }
    }
}
