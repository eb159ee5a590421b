//! Outcome-phase estimators of pairwise average treatment effects.
//!
//! Every estimator here produces level-wise quantities `μ_t` and reports
//! `μ_t − μ_s` for each pair, which makes the pairwise effects transitive.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::data::Dataset;
use crate::design::{EliminationRule, SubclassPartition};
use crate::error::{Error, Result};
use crate::ols::fit_ols;
use crate::ordinal::{fit_ordered_logit, OrdinalFit};
use crate::par;
use crate::util::{mean, sample_variance, serialize_matrix};
use crate::{unit_probs, CategoryModel};

/// Normal 97.5% quantile used for all intervals.
pub const Z95: f64 = 1.96;
/// Bootstrap resamples when none are configured.
pub const DEFAULT_BOOTSTRAP: usize = 1000;
/// Redraws allowed for a bootstrap resample whose model fit fails.
pub const MAX_RESAMPLE_RETRIES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairEffect {
    /// One-based higher level.
    pub t: usize,
    /// One-based lower level.
    pub s: usize,
    pub estimate: f64,
    pub se: f64,
    pub ci95: (f64, f64),
}

impl PairEffect {
    fn new(t: usize, s: usize, estimate: f64, se: f64) -> Self {
        PairEffect { t: t + 1, s: s + 1, estimate, se, ci95: (estimate - Z95 * se, estimate + Z95 * se) }
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci95.0 <= truth && truth <= self.ci95.1
    }

    pub fn significant(&self) -> bool {
        !(self.ci95.0 <= 0.0 && 0.0 <= self.ci95.1)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EffectMetadata {
    pub k: Option<usize>,
    pub elimination: Option<EliminationRule>,
    pub adjustment: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IptwDiagnostics {
    /// Units whose inverse-probability weight exceeds 10.
    pub weights_over_10: usize,
    pub max_weight: f64,
    pub bootstrap_b: usize,
    /// Resamples redrawn after a failed model fit.
    pub redraws: usize,
}

/// All `Z(Z−1)/2` pairwise effects from one estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectTable {
    pub estimator: String,
    pub levels: usize,
    /// Ordered by `t` then `s`, with `t > s`.
    pub pairs: Vec<PairEffect>,
    pub metadata: EffectMetadata,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iptw: Option<IptwDiagnostics>,
}

fn pair_index(t: usize, s: usize) -> usize {
    debug_assert!(t > s);
    t * (t - 1) / 2 + s
}

impl EffectTable {
    fn from_parts(estimator: &str, levels: usize, estimates: impl Fn(usize, usize) -> (f64, f64)) -> Self {
        let mut pairs = Vec::with_capacity(levels * (levels - 1) / 2);
        for t in 1..levels {
            for s in 0..t {
                let (est, se) = estimates(t, s);
                pairs.push(PairEffect::new(t, s, est, se));
            }
        }
        EffectTable { estimator: estimator.to_string(), levels, pairs, metadata: EffectMetadata::default(), iptw: None }
    }

    /// Effects `μ_t − μ_s` with standard errors from the covariance of `μ`.
    pub fn from_level_means(estimator: &str, mu: &[f64], cov: &DMatrix<f64>) -> Self {
        Self::from_parts(estimator, mu.len(), |t, s| {
            let var = cov[(t, t)] + cov[(s, s)] - 2.0 * cov[(t, s)];
            (mu[t] - mu[s], var.max(0.0).sqrt())
        })
    }

    pub fn with_metadata(mut self, metadata: EffectMetadata) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn pair(&self, t: usize, s: usize) -> &PairEffect {
        &self.pairs[pair_index(t, s)]
    }

    /// Signed effect of zero-based level `t` versus `s`; `estimate(s, t) = −estimate(t, s)`.
    pub fn estimate(&self, t: usize, s: usize) -> f64 {
        match t.cmp(&s) {
            std::cmp::Ordering::Greater => self.pair(t, s).estimate,
            std::cmp::Ordering::Less => -self.pair(s, t).estimate,
            std::cmp::Ordering::Equal => 0.0,
        }
    }

    pub fn se(&self, t: usize, s: usize) -> f64 {
        match t.cmp(&s) {
            std::cmp::Ordering::Greater => self.pair(t, s).se,
            std::cmp::Ordering::Less => self.pair(s, t).se,
            std::cmp::Ordering::Equal => 0.0,
        }
    }
}

/// Randomized-block F test for the treatment factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GlobalTest {
    pub statistic: f64,
    pub df: (usize, usize),
    pub p_value: f64,
    /// True for the covariance-adjusted (ANCOVA) variant.
    pub adjusted: bool,
}

fn indicator_design(data: &Dataset, rows: &[usize], blocks: Option<(&SubclassPartition, usize)>, treat_from: usize, adjustment: &[usize]) -> DMatrix<f64> {
    let z = data.levels();
    let nb = blocks.map_or(0, |(_, k)| k);
    let nt = z - treat_from;
    let width = nb + nt + adjustment.len();
    let t = data.treatment();
    DMatrix::from_fn(rows.len(), width, |r, c| {
        let i = rows[r];
        if c < nb {
            let (part, _) = blocks.expect("blocks");
            f64::from(u8::from(part.assignment[i] == c))
        } else if c < nb + nt {
            f64::from(u8::from(t[i] == treat_from + c - nb))
        } else {
            data.value(i, adjustment[c - nb - nt])
        }
    })
}

pub fn global_test(data: &Dataset, partition: &SubclassPartition, adjustment: &[usize]) -> Result<GlobalTest> {
    data.check_columns(adjustment)?;
    let rows: Vec<usize> = (0..data.n()).collect();
    let y = data.outcome();
    let z = data.levels();
    let k = partition.k;
    let full = indicator_design(data, &rows, Some((partition, k)), 1, adjustment);
    let full_fit = fit_ols(y, &full)?;
    full_fit.ensure_retained(&(k..k + z - 1).collect::<Vec<_>>(), "treatment indicator")?;
    let reduced = DMatrix::from_fn(data.n(), k + adjustment.len(), |r, c| {
        if c < k {
            full[(r, c)]
        } else {
            full[(r, c + z - 1)]
        }
    });
    let red_fit = fit_ols(y, &reduced)?;
    let df1 = full_fit.rank() - red_fit.rank();
    let df2 = full_fit.dof;
    if df1 == 0 {
        return Err(Error::RankDeficientDesign("treatment indicators add no rank to the block model".into()));
    }
    let num = ((red_fit.rss - full_fit.rss) / df1 as f64).max(0.0);
    let den = full_fit.rss / df2 as f64;
    let (statistic, p_value) = if den > 0.0 {
        let f = num / den;
        let dist = FisherSnedecor::new(df1 as f64, df2 as f64).map_err(|e| Error::invalid(e.to_string()))?;
        (f, dist.sf(f).clamp(0.0, 1.0))
    } else if num > 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        (0.0, 1.0)
    };
    Ok(GlobalTest { statistic, df: (df1, df2), p_value, adjusted: !adjustment.is_empty() })
}

/// Outcomes grouped by treatment level.
fn by_level(data: &Dataset, rows: &[usize]) -> Vec<Vec<f64>> {
    let mut groups = vec![Vec::new(); data.levels()];
    for &i in rows {
        groups[data.treatment()[i]].push(data.outcome()[i]);
    }
    groups
}

pub fn estimate_naive(data: &Dataset) -> Result<EffectTable> {
    let rows: Vec<usize> = (0..data.n()).collect();
    let groups = by_level(data, &rows);
    if let Some(level) = groups.iter().position(Vec::is_empty) {
        return Err(Error::EmptyLevel { level });
    }
    let mu: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let z = data.levels();
    let cov = DMatrix::from_fn(z, z, |a, b| if a == b { sample_variance(&groups[a]) / groups[a].len() as f64 } else { 0.0 });
    Ok(EffectTable::from_level_means("naive", &mu, &cov))
}

/// Subclass-weighted differences of cell means.
pub fn estimate_subclass_means(data: &Dataset, partition: &SubclassPartition) -> Result<EffectTable> {
    let z = data.levels();
    let mut mu = vec![0.0; z];
    let mut var = vec![0.0; z];
    for k in 0..partition.k {
        let groups = by_level(data, &partition.members(k));
        let w = partition.w_k[k];
        for (t, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::EmptyCell { subclass: k + 1, level: t + 1 });
            }
            mu[t] += w * mean(g);
            var[t] += w * w * sample_variance(g) / g.len() as f64;
        }
    }
    let cov = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(var));
    Ok(EffectTable::from_level_means("subclass_means", &mu, &cov).with_metadata(EffectMetadata {
        k: Some(partition.k),
        ..Default::default()
    }))
}

/// Within-subclass regression output.
#[derive(Debug, Clone, Serialize)]
pub struct SubclassEffect {
    /// One-based subclass.
    pub k: usize,
    pub weight: f64,
    /// Covariate-adjusted level means.
    pub alpha_hat: Vec<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub sigma_k: DMatrix<f64>,
    /// Adjustment columns dropped as collinear within this subclass.
    pub dropped_covariates: Vec<usize>,
}

impl SubclassEffect {
    pub fn pair_effect(&self, t: usize, s: usize) -> f64 {
        self.alpha_hat[t] - self.alpha_hat[s]
    }

    /// `c Σ_k cᵀ` for the contrast `c = e_t − e_s`.
    pub fn pair_variance(&self, t: usize, s: usize) -> f64 {
        self.sigma_k[(t, t)] + self.sigma_k[(s, s)] - 2.0 * self.sigma_k[(t, s)]
    }
}

/// Regression of outcome on level indicators (no intercept) plus `adjustment`
/// within `rows`; returns the level coefficients and their covariance.
fn level_regression(data: &Dataset, rows: &[usize], adjustment: &[usize]) -> Result<(Vec<f64>, DMatrix<f64>, Vec<usize>)> {
    let z = data.levels();
    let design = indicator_design(data, rows, None, 0, adjustment);
    let y: Vec<f64> = rows.iter().map(|&i| data.outcome()[i]).collect();
    let fit = fit_ols(&y, &design)?;
    fit.ensure_retained(&(0..z).collect::<Vec<_>>(), "treatment indicator")?;
    // indicators come first and are all retained, so they occupy positions 0..z
    let alpha = fit.coef[..z].to_vec();
    let sigma = fit.vcov.view((0, 0), (z, z)).into_owned();
    let dropped = fit.dropped_columns.iter().map(|&c| adjustment[c - z]).collect();
    Ok((alpha, sigma, dropped))
}

/// Within-subclass regression adjustment aggregated with subclass weights.
pub fn estimate_subclass_regression(
    data: &Dataset,
    partition: &SubclassPartition,
    adjustment: &[usize],
) -> Result<(EffectTable, Vec<SubclassEffect>)> {
    data.check_columns(adjustment)?;
    let z = data.levels();
    let members: Vec<Vec<usize>> = (0..partition.k).map(|k| partition.members(k)).collect();
    for (k, m) in members.iter().enumerate() {
        let counts = m.iter().fold(vec![0usize; z], |mut c, &i| {
            c[data.treatment()[i]] += 1;
            c
        });
        if let Some(t) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyCell { subclass: k + 1, level: t + 1 });
        }
    }
    let fitted = par::map_slice(&members, |m| level_regression(data, m, adjustment));
    let mut effects = Vec::with_capacity(partition.k);
    for (k, res) in fitted.into_iter().enumerate() {
        let (alpha_hat, sigma_k, dropped_covariates) = res.map_err(|e| match e {
            Error::RankDeficientDesign(msg) => Error::RankDeficientDesign(format!("subclass {}: {msg}", k + 1)),
            other => other,
        })?;
        effects.push(SubclassEffect { k: k + 1, weight: partition.w_k[k], alpha_hat, sigma_k, dropped_covariates });
    }
    let mut mu = vec![0.0; z];
    let mut cov = DMatrix::<f64>::zeros(z, z);
    for e in &effects {
        for (m, a) in mu.iter_mut().zip(e.alpha_hat.iter()) {
            *m += e.weight * a;
        }
        cov += &e.sigma_k * (e.weight * e.weight);
    }
    let table = EffectTable::from_level_means("subclass_regression", &mu, &cov).with_metadata(EffectMetadata {
        k: Some(partition.k),
        ..Default::default()
    });
    Ok((table, effects))
}

/// One global regression of outcome on level indicators and `adjustment`.
pub fn estimate_standard_regression(data: &Dataset, adjustment: &[usize]) -> Result<EffectTable> {
    data.check_columns(adjustment)?;
    let rows: Vec<usize> = (0..data.n()).collect();
    if let Some(level) = data.level_counts().iter().position(|&c| c == 0) {
        return Err(Error::EmptyLevel { level });
    }
    let (alpha, sigma, _) = level_regression(data, &rows, adjustment)?;
    Ok(EffectTable::from_level_means("standard_regression", &alpha, &sigma))
}

/// Inverse-probability weights `1 / r(T_i, x_i)`.
pub fn inverse_probability_weights<M: CategoryModel + ?Sized>(data: &Dataset, model: &M) -> Result<Vec<f64>> {
    (0..data.n())
        .map(|i| {
            let r = unit_probs(model, data, i)[data.treatment()[i]];
            if r > 0.0 {
                Ok(1.0 / r)
            } else {
                Err(Error::ZeroProbability { unit: data.ids()[i] })
            }
        })
        .collect()
}

/// Weights divided by their level total, so they sum to one within each level.
pub fn normalized_weights(data: &Dataset, weights: &[f64]) -> Vec<f64> {
    let mut totals = vec![0.0; data.levels()];
    for (&t, &w) in data.treatment().iter().zip(weights) {
        totals[t] += w;
    }
    data.treatment().iter().zip(weights).map(|(&t, &w)| w / totals[t]).collect()
}

/// Normalized weighted level means. Weights are taken relative to the
/// largest weight at each level, which leaves equal weights at exactly 1.
fn weighted_level_means(data: &Dataset, weights: &[f64]) -> Result<Vec<f64>> {
    let z = data.levels();
    let mut wmax = vec![0.0_f64; z];
    for (&t, &w) in data.treatment().iter().zip(weights) {
        wmax[t] = wmax[t].max(w);
    }
    let mut num = vec![0.0; z];
    let mut den = vec![0.0; z];
    let mut count = vec![0usize; z];
    for ((&t, &w), &y) in data.treatment().iter().zip(weights).zip(data.outcome()) {
        let r = w / wmax[t];
        num[t] += r * y;
        den[t] += r;
        count[t] += 1;
    }
    if let Some(level) = count.iter().position(|&c| c == 0) {
        return Err(Error::EmptyLevel { level });
    }
    Ok(num.iter().zip(&den).map(|(a, b)| a / b).collect())
}

/// IPTW level means for a fitted treatment model.
pub fn iptw_level_means<M: CategoryModel + ?Sized>(data: &Dataset, model: &M) -> Result<Vec<f64>> {
    let w = inverse_probability_weights(data, model)?;
    weighted_level_means(data, &w)
}

fn pair_differences(mu: &[f64]) -> Vec<f64> {
    let z = mu.len();
    let mut out = Vec::with_capacity(z * (z - 1) / 2);
    for t in 1..z {
        for s in 0..t {
            out.push(mu[t] - mu[s]);
        }
    }
    out
}

/// RNG for resample `index` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn bootstrap_once(data: &Dataset, columns: &[usize], seed: u64, b: usize) -> Result<(Vec<f64>, usize)> {
    let mut rng = stream_rng(seed, b as u64);
    let n = data.n();
    let mut last_err = None;
    for attempt in 0..=MAX_RESAMPLE_RETRIES {
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let sample = data.resample(&idx);
        let result = fit_ordered_logit(&sample, columns).and_then(|fit| iptw_level_means(&sample, &fit));
        match result {
            Ok(mu) => return Ok((pair_differences(&mu), attempt)),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Normalized IPTW with bootstrap standard errors; the treatment model is
/// refitted on every resample.
pub fn estimate_iptw(data: &Dataset, fit: &OrdinalFit, bootstrap_b: usize, seed: u64) -> Result<EffectTable> {
    if bootstrap_b < 2 {
        return Err(Error::invalid("bootstrap needs at least two resamples"));
    }
    let weights = inverse_probability_weights(data, fit)?;
    let mu = weighted_level_means(data, &weights)?;
    let reps = par::map_range(bootstrap_b, |b| bootstrap_once(data, &fit.columns, seed, b));
    let mut draws = Vec::with_capacity(bootstrap_b);
    let mut redraws = 0;
    for r in reps {
        let (d, retries) = r?;
        redraws += retries;
        draws.push(d);
    }
    let npairs = mu.len() * (mu.len() - 1) / 2;
    let se: Vec<f64> = (0..npairs)
        .map(|j| {
            let col: Vec<f64> = draws.iter().map(|d| d[j]).collect();
            sample_variance(&col).sqrt()
        })
        .collect();
    let mut table = EffectTable::from_parts("iptw", mu.len(), |t, s| (mu[t] - mu[s], se[pair_index(t, s)]));
    table.iptw = Some(IptwDiagnostics {
        weights_over_10: weights.iter().filter(|&&w| w > 10.0).count(),
        max_weight: weights.iter().fold(0.0, |a: f64, &b| a.max(b)),
        bootstrap_b,
        redraws,
    });
    Ok(table)
}
