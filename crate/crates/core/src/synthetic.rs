//! Synthetic data generators with known parameters, used by the test suites,
//! benches and desk-scale simulation studies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Column, ColumnKind, Dataset};
use crate::error::Result;
use crate::util::cdf;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Level drawn by inverse CDF from a proportional-odds model at linear predictor `eta`.
pub fn draw_ordinal(rng: &mut impl Rng, theta: &[f64], eta: f64) -> usize {
    let u: f64 = rng.random();
    theta.iter().position(|&th| u < cdf(th - eta)).unwrap_or(theta.len())
}

/// Categorical draw from a probability vector.
pub fn draw_categorical(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (l, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return l;
        }
    }
    probs.len() - 1
}

fn numeric_columns(p: usize) -> Vec<Column> {
    (0..p).map(|j| Column::numeric(format!("x{}", j + 1))).collect()
}

/// Standard-normal covariates with treatment from the proportional-odds model
/// `P(T ≤ t) = F(θ_t − βᵀx)`; outcomes are zero.
pub fn ordered_logit_data(n: usize, beta: &[f64], theta: &[f64], seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = beta.len();
    let mut rows = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..p).map(|_| normal(&mut rng)).collect();
        let eta: f64 = beta.iter().zip(&x).map(|(b, v)| b * v).sum();
        t.push(draw_ordinal(&mut rng, theta, eta));
        rows.push(x);
    }
    Dataset::from_rows(numeric_columns(p), &rows, t, vec![0.0; n], theta.len() + 1)
}

/// Outcome model `y = α_T + γᵀx + ε` with ordinal assignment confounded through `x`.
#[derive(Debug, Clone)]
pub struct LinearOutcomeDesign {
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub assignment_beta: Vec<f64>,
    pub theta: Vec<f64>,
    pub noise_sd: f64,
}

impl LinearOutcomeDesign {
    /// Five levels, three covariates, assignment and outcome both driven by `x`.
    pub fn confounded() -> Self {
        LinearOutcomeDesign {
            alpha: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            gamma: vec![2.0, -1.0, 1.5],
            assignment_beta: vec![0.8, -0.6, 0.5],
            theta: vec![-1.5, -0.5, 0.5, 1.5],
            noise_sd: 1.0,
        }
    }

    pub fn generate(&self, n: usize, seed: u64) -> Result<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = self.gamma.len();
        let mut rows = Vec::with_capacity(n);
        let mut t = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..p).map(|_| normal(&mut rng)).collect();
            let eta: f64 = self.assignment_beta.iter().zip(&x).map(|(b, v)| b * v).sum();
            let level = draw_ordinal(&mut rng, &self.theta, eta);
            let mean = self.alpha[level] + self.gamma.iter().zip(&x).map(|(g, v)| g * v).sum::<f64>();
            y.push(mean + self.noise_sd * normal(&mut rng));
            t.push(level);
            rows.push(x);
        }
        Dataset::from_rows(numeric_columns(p), &rows, t, y, self.theta.len() + 1)
    }

    /// True `α_t − α_s`.
    pub fn effect(&self, t: usize, s: usize) -> f64 {
        self.alpha[t] - self.alpha[s]
    }
}

/// Base population for simulation studies: eight mixed-type covariates, five
/// levels assigned by a multinomial logit whose level effects are not
/// monotone (so a proportional-odds model is misspecified), and an outcome
/// linear in the covariates plus a level shift.
pub fn observational_base(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns = vec![
        Column::numeric("age"),
        Column::numeric("prior_bmi"),
        Column::numeric("activity"),
        Column::numeric("income"),
        Column::new("smoker", ColumnKind::Binary),
        Column::new("education", ColumnKind::Ordinal),
        Column::numeric("meals_out"),
        Column::new("female", ColumnKind::Binary),
    ];
    // multinomial log-odds versus the last level, rows = levels 1..4
    let gamma: [[f64; 9]; 4] = [
        [0.3, -0.5, 0.5, -0.2, -0.4, 0.4, -0.3, 0.2, -0.2],
        [0.0, 0.4, -0.5, 0.1, 0.0, -0.2, 0.1, -0.1, 0.1],
        [0.1, 0.6, 0.0, 0.3, 0.3, 0.0, 0.2, 0.1, 0.0],
        [-0.1, -0.3, -0.6, 0.4, 0.2, 0.3, 0.0, -0.2, 0.3],
    ];
    let shift = [0.0, -0.2, -0.3, -1.2, 0.3];
    let mut rows = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let common = normal(&mut rng);
        let age = 0.6 * common + 0.8 * normal(&mut rng);
        let bmi = 0.5 * common + 0.866 * normal(&mut rng);
        let activity = -0.4 * common + 0.917 * normal(&mut rng);
        let income = normal(&mut rng);
        let smoker = f64::from(u8::from(rng.random::<f64>() < cdf(-0.8 + 0.5 * age)));
        let education = (2.0 + income + 0.8 * normal(&mut rng)).round().clamp(0.0, 4.0);
        let meals = (0.3 * normal(&mut rng)).exp() - 1.0;
        let female = f64::from(u8::from(rng.random::<f64>() < 0.5));
        let x = [1.0, age, bmi, activity, income, smoker, education - 2.0, meals, female];
        let mut eta: Vec<f64> = gamma.iter().map(|g| g.iter().zip(&x).map(|(a, b)| a * b).sum()).collect();
        eta.push(0.0);
        let m = eta.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let e: Vec<f64> = eta.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        let probs: Vec<f64> = e.iter().map(|v| v / s).collect();
        let level = draw_categorical(&mut rng, &probs);
        let outcome = 28.0 + 1.5 * age + 2.5 * bmi - 1.0 * activity - 0.6 * income + 0.8 * smoker - 0.4 * (education - 2.0)
            + 1.2 * meals
            - 0.5 * female
            + shift[level]
            + 2.0 * normal(&mut rng);
        rows.push(vec![age, bmi, activity, income, smoker, education, meals, female]);
        t.push(level);
        y.push(outcome);
    }
    Dataset::from_rows(columns, &rows, t, y, 5)
}
