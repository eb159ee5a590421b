//! Generalized-propensity-score subclassification for ordinal exposures.
//!
//! The crate covers the design phase (proportional-odds balancing score,
//! common-support trimming, equal-frequency subclassification and Kendall τ_b
//! balance audits), the outcome phase (subclass means, within-subclass
//! regression, IPTW, naive and regression baselines, randomized-block F tests)
//! and a Monte Carlo harness that compares those estimators on datasets with
//! fully known potential outcomes.
//!
//! Data-parallel loops (bootstrap resamples, replications, per-covariate
//! audits) run on rayon when the default `parallel` feature is enabled and
//! sequentially otherwise; results are identical either way.

pub mod balance;
pub mod data;
pub mod design;
pub mod error;
pub mod estimation;
pub mod multinomial;
pub mod ols;
mod optim;
pub mod ordinal;
pub mod par;
pub mod report;
pub mod simulation;
pub mod synthetic;
mod standardize;
pub mod util;

/// Crate version, recorded in report provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use data::{Column, ColumnKind, Dataset};
pub use error::{Error, Result};
pub use multinomial::{fit_multinomial_logit, multinomial_negloglik_grad, MultinomialFit};
pub use ols::{fit_ols, OlsFit};
pub use ordinal::{fit_ordered_logit, ordered_logit_negloglik_grad, OrdinalFit};

/// A fitted model assigning probabilities to each treatment level.
pub trait CategoryModel {
    /// Dataset columns the model reads, in coefficient order.
    fn columns(&self) -> &[usize];
    fn levels(&self) -> usize;
    /// Probabilities of each level for covariates given in `columns()` order.
    fn category_probs(&self, x: &[f64]) -> Vec<f64>;
}

/// Level probabilities `r(t, x)` under either treatment model.
pub fn predict_category_probs<M: CategoryModel + ?Sized>(model: &M, x: &[f64]) -> Vec<f64> {
    model.category_probs(x)
}

/// Level probabilities for unit `i` of `data`.
pub fn unit_probs<M: CategoryModel + ?Sized>(model: &M, data: &Dataset, i: usize) -> Vec<f64> {
    model.category_probs(&data.select(i, model.columns()))
}
