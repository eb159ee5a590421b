//! Damped Newton–Raphson with step halving, shared by the two treatment models.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) const BACKTRACK_FACTOR: f64 = 0.5;
pub(crate) const MAX_HALVINGS: usize = 30;
/// Relative precision of a summed log-likelihood.
pub(crate) const ROUNDOFF: f64 = 1e-12;

/// Log-likelihood, its gradient, and a positive-definite curvature matrix
/// (the negative Hessian or an information-matrix surrogate).
pub(crate) struct Evaluation {
    pub loglik: f64,
    pub grad: Vec<f64>,
    pub curvature: Option<DMatrix<f64>>,
}

pub(crate) struct NewtonOutcome {
    pub params: Vec<f64>,
    pub loglik: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Accepted log-likelihood values, starting point first.
    pub trace: Vec<f64>,
}

pub(crate) fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, g| m.max(g.abs()))
}

/// Maximizes the objective behind `eval` from `start`.
///
/// `eval(params, with_curvature)` returns `None` when the objective is not
/// finite at `params`. `guard` runs after each accepted step and may abort
/// the fit (separation checks).
pub(crate) fn newton_maximize<E, G>(
    start: Vec<f64>,
    tol: f64,
    max_iter: usize,
    eval: E,
    guard: G,
) -> Result<NewtonOutcome>
where
    E: Fn(&[f64], bool) -> Option<Evaluation>,
    G: Fn(&[f64]) -> Result<()>,
{
    let mut params = start;
    let mut current = eval(&params, true).ok_or_else(|| Error::invalid("objective is not finite at the starting point"))?;
    let mut trace = vec![current.loglik];
    let mut iterations = 0;

    loop {
        let grad_norm = max_norm(&current.grad);
        if grad_norm < tol {
            return Ok(NewtonOutcome { params, loglik: current.loglik, grad_norm, iterations, converged: true, trace });
        }
        if iterations >= max_iter {
            return Ok(NewtonOutcome { params, loglik: current.loglik, grad_norm, iterations, converged: false, trace });
        }
        iterations += 1;

        let curvature = current.curvature.take().expect("curvature requested");
        let grad = DVector::from_column_slice(&current.grad);
        let step = match curvature.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => curvature
                .lu()
                .solve(&grad)
                .ok_or_else(|| Error::RankDeficientDesign("singular information matrix".into()))?,
        };

        // Once the predicted gain is below what the summed log-likelihood can
        // resolve, the comparison is pure rounding noise and the full step is taken.
        let predicted_gain = 0.5 * grad.dot(&step);
        let resolution = ROUNDOFF * (1.0 + current.loglik.abs());
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p + scale * s).collect();
            if let Some(ev) = eval(&trial, true) {
                if ev.loglik >= current.loglik || (predicted_gain < resolution && ev.loglik >= current.loglik - resolution) {
                    accepted = Some((trial, ev));
                    break;
                }
            }
            scale *= BACKTRACK_FACTOR;
        }
        match accepted {
            Some((trial, ev)) => {
                params = trial;
                current = ev;
                trace.push(current.loglik);
                guard(&params)?;
            }
            None => {
                // No ascent direction left at machine precision.
                let grad_norm = max_norm(&current.grad);
                return Ok(NewtonOutcome {
                    params,
                    loglik: current.loglik,
                    grad_norm,
                    iterations,
                    converged: grad_norm < tol,
                    trace,
                });
            }
        }
    }
}
