//! Proportional-odds (ordered logit) treatment model.
//!
//! Cumulative probabilities follow `P(T ≤ t | x) = F(θ_t − βᵀx)` with `F` the
//! logistic CDF, so a larger `βᵀx` means a stochastically larger level. The
//! optimizer works on `(β, θ_1, log(θ_2 − θ_1), …)` so the thresholds stay
//! strictly increasing, and on centered/scaled covariates; reported values
//! are on the original covariate scale.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ols::fit_ols;
use crate::optim::{max_norm, newton_maximize, Evaluation};
use crate::standardize::{raw_rows, Standardizer};
use crate::util::{cdf, pdf, serialize_matrix, sf};
use crate::CategoryModel;

pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 100;
/// Standardized-scale coefficient magnitude treated as separation.
pub const SEPARATION_THRESHOLD: f64 = 50.0;

#[derive(Debug, Clone, Serialize)]
pub struct OrdinalFit {
    /// Dataset covariate columns the model was fitted on, in coefficient order.
    pub columns: Vec<usize>,
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
    pub loglik: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Covariance of `(β, θ)` in that order.
    #[serde(serialize_with = "serialize_matrix")]
    pub vcov: DMatrix<f64>,
    #[serde(skip)]
    pub loglik_trace: Vec<f64>,
}

impl OrdinalFit {
    /// A fit with fixed parameters and no estimation metadata.
    pub fn from_parameters(columns: Vec<usize>, theta: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::invalid("need at least one threshold"));
        }
        if theta.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
            return Err(Error::invalid("thresholds must be strictly increasing"));
        }
        if columns.len() != beta.len() {
            return Err(Error::DimensionMismatch { expected: columns.len(), got: beta.len() });
        }
        let q = beta.len() + theta.len();
        Ok(OrdinalFit {
            columns,
            theta,
            beta,
            loglik: f64::NAN,
            grad_norm: f64::NAN,
            iterations: 0,
            converged: true,
            vcov: DMatrix::zeros(q, q),
            loglik_trace: Vec::new(),
        })
    }

    pub fn levels(&self) -> usize {
        self.theta.len() + 1
    }

    /// The balancing score `βᵀx` for a covariate vector in `columns` order.
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.beta.len(), "covariate arity");
        self.beta.iter().zip(x).map(|(b, v)| b * v).sum()
    }

    /// Linear predictors of every unit in `data`.
    pub fn scores(&self, data: &Dataset) -> Vec<f64> {
        (0..data.n())
            .map(|i| self.columns.iter().zip(&self.beta).map(|(&j, b)| b * data.value(i, j)).sum())
            .collect()
    }

    /// Standard error of `β_j`.
    pub fn se_beta(&self, j: usize) -> f64 {
        self.vcov[(j, j)].sqrt()
    }

    pub fn se_theta(&self, t: usize) -> f64 {
        let k = self.beta.len() + t;
        self.vcov[(k, k)].sqrt()
    }

    /// Category probabilities given a linear predictor value.
    pub fn probs_from_score(&self, eta: f64) -> Vec<f64> {
        let z = self.levels();
        (0..z).map(|j| cell_probability(&self.theta, j, eta)).collect()
    }

    /// The unconstrained parameter vector `(β, θ_1, log increments)`.
    pub fn increment_params(&self) -> Vec<f64> {
        let mut params = self.beta.clone();
        params.extend(theta_to_increments(&self.theta));
        params
    }
}

impl CategoryModel for OrdinalFit {
    fn columns(&self) -> &[usize] {
        &self.columns
    }

    fn levels(&self) -> usize {
        OrdinalFit::levels(self)
    }

    fn category_probs(&self, x: &[f64]) -> Vec<f64> {
        self.probs_from_score(self.linear_predictor(x))
    }
}

fn theta_to_increments(theta: &[f64]) -> Vec<f64> {
    let mut out = vec![theta[0]];
    out.extend(theta.windows(2).map(|w| (w[1] - w[0]).ln()));
    out
}

fn increments_to_theta(phi: &[f64]) -> Vec<f64> {
    let mut theta = Vec::with_capacity(phi.len());
    let mut acc = phi[0];
    theta.push(acc);
    for d in &phi[1..] {
        acc += d.exp();
        theta.push(acc);
    }
    theta
}

/// `P(T = j | η)` computed on whichever tail avoids cancellation.
fn cell_probability(theta: &[f64], j: usize, eta: f64) -> f64 {
    let z = theta.len() + 1;
    let upper = (j < z - 1).then(|| theta[j] - eta);
    let lower = (j > 0).then(|| theta[j - 1] - eta);
    match (lower, upper) {
        (None, Some(a)) => cdf(a),
        (Some(b), None) => sf(b),
        (Some(b), Some(a)) => {
            if b > 0.0 {
                sf(b) - sf(a)
            } else {
                cdf(a) - cdf(b)
            }
        }
        (None, None) => 1.0,
    }
}

/// Log-likelihood pieces in `(β, θ)` coordinates.
struct ThetaSpace {
    loglik: f64,
    grad: Vec<f64>,
    hess: Option<DMatrix<f64>>,
}

fn objective(rows: &[f64], t: &[usize], p: usize, beta: &[f64], theta: &[f64], hessian: bool) -> Option<ThetaSpace> {
    let z = theta.len() + 1;
    let q = p + z - 1;
    let mut loglik = 0.0;
    let mut grad = vec![0.0; q];
    let mut hess = hessian.then(|| DMatrix::<f64>::zeros(q, q));

    for (i, &level) in t.iter().enumerate() {
        let x = &rows[i * p..(i + 1) * p];
        let eta: f64 = beta.iter().zip(x).map(|(b, v)| b * v).sum();
        let prob = cell_probability(theta, level, eta);
        if !prob.is_finite() || prob <= 0.0 {
            return None;
        }
        let (fa, fpa) = if level < z - 1 {
            let a = theta[level] - eta;
            let f = pdf(a);
            (f, f * (sf(a) - cdf(a)))
        } else {
            (0.0, 0.0)
        };
        let (fb, fpb) = if level > 0 {
            let b = theta[level - 1] - eta;
            let f = pdf(b);
            (f, f * (sf(b) - cdf(b)))
        } else {
            (0.0, 0.0)
        };
        loglik += prob.ln();
        let gu = fa / prob;
        let gl = fb / prob;
        let d = gu - gl;
        for (g, v) in grad[..p].iter_mut().zip(x) {
            *g -= d * v;
        }
        if level < z - 1 {
            grad[p + level] += gu;
        }
        if level > 0 {
            grad[p + level - 1] -= gl;
        }

        if let Some(h) = hess.as_mut() {
            let h_eta = (fpa - fpb) / prob - d * d;
            for r in 0..p {
                let xr = x[r] * h_eta;
                for c in 0..=r {
                    h[(r, c)] += xr * x[c];
                }
            }
            if level < z - 1 {
                let u = p + level;
                let h_eu = -fpa / prob + gu * d;
                for r in 0..p {
                    h[(u, r)] += h_eu * x[r];
                }
                h[(u, u)] += fpa / prob - gu * gu;
            }
            if level > 0 {
                let l = p + level - 1;
                let h_el = fpb / prob - gl * d;
                for r in 0..p {
                    h[(l, r)] += h_el * x[r];
                }
                h[(l, l)] += -fpb / prob - gl * gl;
                if level < z - 1 {
                    // (u, l) with u = l + 1 sits below the diagonal
                    h[(l + 1, l)] += gu * gl;
                }
            }
        }
    }
    if let Some(h) = hess.as_mut() {
        for r in 0..q {
            for c in r + 1..q {
                h[(r, c)] = h[(c, r)];
            }
        }
    }
    Some(ThetaSpace { loglik, grad, hess })
}

/// Jacobian of `θ` with respect to `(θ_1, log increments)`.
fn theta_jacobian(phi: &[f64]) -> DMatrix<f64> {
    let m = phi.len();
    DMatrix::from_fn(m, m, |t, s| match s {
        0 => 1.0,
        s if s <= t => phi[s].exp(),
        _ => 0.0,
    })
}

fn to_increment_space(ts: ThetaSpace, p: usize, phi: &[f64]) -> Evaluation {
    let m = phi.len();
    let jac = theta_jacobian(phi);
    let mut grad = ts.grad[..p].to_vec();
    let g_theta = nalgebra::DVector::from_column_slice(&ts.grad[p..]);
    grad.extend((jac.transpose() * g_theta).iter());
    let curvature = ts.hess.map(|h| {
        let mut full_jac = DMatrix::<f64>::identity(p + m, p + m);
        full_jac.view_mut((p, p), (m, m)).copy_from(&jac);
        full_jac.transpose() * (-h) * &full_jac
    });
    Evaluation { loglik: ts.loglik, grad, curvature }
}

fn split(params: &[f64], p: usize) -> (&[f64], Vec<f64>) {
    (&params[..p], increments_to_theta(&params[p..]))
}

/// Negative log-likelihood and its exact gradient at `params = (β, θ_1, log increments)`,
/// on the original covariate scale.
pub fn ordered_logit_negloglik_grad(params: &[f64], data: &Dataset, columns: &[usize]) -> Result<(f64, Vec<f64>)> {
    data.check_columns(columns)?;
    let p = columns.len();
    let expected = p + data.levels() - 1;
    if params.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: params.len() });
    }
    let rows = raw_rows(data, columns);
    let (beta, theta) = split(params, p);
    match objective(&rows, data.treatment(), p, beta, &theta, false) {
        Some(ts) => {
            let ev = to_increment_space(ts, p, &params[p..]);
            Ok((-ev.loglik, ev.grad.iter().map(|g| -g).collect()))
        }
        None => Ok((f64::INFINITY, vec![f64::NAN; expected])),
    }
}

fn check_preconditions(data: &Dataset, columns: &[usize]) -> Result<()> {
    data.check_columns(columns)?;
    let (n, p, z) = (data.n(), columns.len(), data.levels());
    if n < p + z {
        return Err(Error::RankDeficientDesign(format!("{n} units cannot identify {p} coefficients and {} thresholds", z - 1)));
    }
    if let Some(level) = data.level_counts().iter().position(|&c| c == 0) {
        return Err(Error::EmptyLevel { level });
    }
    Ok(())
}

/// Fails when the covariates plus an intercept are collinear.
pub(crate) fn check_design_rank(rows: &[f64], n: usize, p: usize) -> Result<()> {
    let design = DMatrix::from_fn(n, p + 1, |i, c| if c == 0 { 1.0 } else { rows[i * p + c - 1] });
    let fit = fit_ols(&vec![0.0; n], &design)?;
    if let Some(&c) = fit.dropped_columns.first() {
        return Err(Error::RankDeficientDesign(format!("covariate {} is collinear with the others", c - 1)));
    }
    Ok(())
}

/// Maximum-likelihood fit of the proportional-odds model of `T` on `columns`.
pub fn fit_ordered_logit(data: &Dataset, columns: &[usize]) -> Result<OrdinalFit> {
    check_preconditions(data, columns)?;
    let n = data.n();
    let p = columns.len();
    let z = data.levels();
    let scaler = Standardizer::fit(data, columns)?;
    let rows = scaler.transform(data, columns);
    check_design_rank(&rows, n, p)?;
    let t = data.treatment();

    let counts = data.level_counts();
    let mut cum = 0usize;
    let theta0: Vec<f64> = counts[..z - 1]
        .iter()
        .map(|c| {
            cum += c;
            let q = cum as f64 / n as f64;
            (q / (1.0 - q)).ln()
        })
        .collect();
    let mut start = vec![0.0; p];
    start.extend(theta_to_increments(&theta0));

    let eval = |params: &[f64], want: bool| {
        let (beta, theta) = split(params, p);
        objective(&rows, t, p, beta, &theta, want).map(|ts| to_increment_space(ts, p, &params[p..]))
    };
    let guard = |params: &[f64]| match params[..p].iter().enumerate().find(|(_, b)| b.abs() > SEPARATION_THRESHOLD) {
        Some((j, b)) => Err(Error::SeparationDetected { column: columns[j], magnitude: b.abs() }),
        None => Ok(()),
    };
    let outcome = newton_maximize(start, GRADIENT_TOLERANCE, MAX_ITERATIONS, eval, guard)?;

    let (beta_std, theta_std) = split(&outcome.params, p);
    let ts = objective(&rows, t, p, beta_std, &theta_std, true).expect("finite at accepted iterate");
    let info = -ts.hess.expect("hessian requested");
    let q = p + z - 1;
    let v_std = info
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| info.try_inverse())
        .ok_or_else(|| Error::RankDeficientDesign("singular information matrix at the optimum".into()))?;

    // (β, θ) = L · (β_std, θ_std)
    let mut l = DMatrix::<f64>::zeros(q, q);
    for j in 0..p {
        l[(j, j)] = 1.0 / scaler.scale[j];
    }
    for k in 0..z - 1 {
        l[(p + k, p + k)] = 1.0;
        for j in 0..p {
            l[(p + k, j)] = scaler.mean[j] / scaler.scale[j];
        }
    }
    let vcov = &l * v_std * l.transpose();
    let beta: Vec<f64> = (0..p).map(|j| beta_std[j] / scaler.scale[j]).collect();
    let shift: f64 = (0..p).map(|j| scaler.mean[j] * beta[j]).sum();
    let theta: Vec<f64> = theta_std.iter().map(|th| th + shift).collect();

    let fit = OrdinalFit {
        columns: columns.to_vec(),
        theta,
        beta,
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
        Err(Error::NonConvergence {
            iterations: fit.iterations,
            grad_norm: fit.grad_norm,
            best: Some(Box::new(fit)),
        })
    }
}

/// Gradient max-norm of the negative log-likelihood at a fit, original scale.
pub fn gradient_norm_at(fit: &OrdinalFit, data: &Dataset) -> Result<f64> {
    let (_, g) = ordered_logit_negloglik_grad(&fit.increment_params(), data, &fit.columns)?;
    Ok(max_norm(&g))
}
