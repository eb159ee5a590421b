//! Monte Carlo comparison of estimators on datasets whose full set of
//! potential outcomes is known.
//!
//! A base dataset is turned into a [`FullPotentialData`] (zero effects, or
//! effects imputed from nearest neighbours on the first principal component).
//! Each replication refits a multinomial logit of the observed treatment on a
//! random covariate subset, redraws treatment from it, reveals the matching
//! potential outcome, and runs every configured estimator.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::design::{partition_dataset, trim_common_support, EliminationRule};
use crate::error::{Error, Result};
use crate::estimation::{
    estimate_iptw, estimate_naive, estimate_standard_regression, estimate_subclass_means,
    estimate_subclass_regression, stream_rng, EffectTable,
};
use crate::multinomial::fit_multinomial_logit;
use crate::ordinal::fit_ordered_logit;
use crate::par;
use crate::util::mean;
use crate::{unit_probs, CategoryModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialOutcomeSet {
    /// Every potential outcome equals the observed outcome.
    Set1,
    /// Unobserved potential outcomes borrowed from the nearest donor on PC1.
    Set2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcaBasis {
    /// Standardized covariates (correlation matrix).
    #[default]
    Correlation,
    /// Centered covariates (covariance matrix).
    Covariance,
}

#[derive(Debug, Clone)]
pub struct FullPotentialData {
    pub set: PotentialOutcomeSet,
    pub base: Dataset,
    /// `po[i][t]`: outcome of unit `i` at zero-based level `t`.
    pub po: Vec<Vec<f64>>,
    /// `true_pate[t][s] = mean_i(po[i][t] − po[i][s])`.
    pub true_pate: Vec<Vec<f64>>,
}

impl FullPotentialData {
    fn new(set: PotentialOutcomeSet, base: Dataset, po: Vec<Vec<f64>>) -> Self {
        let z = base.levels();
        let true_pate = (0..z)
            .map(|t| (0..z).map(|s| mean(&po.iter().map(|r| r[t] - r[s]).collect::<Vec<_>>())).collect())
            .collect();
        FullPotentialData { set, base, po, true_pate }
    }
}

pub fn impute_set1(data: &Dataset) -> FullPotentialData {
    let z = data.levels();
    let po = data.outcome().iter().map(|&y| vec![y; z]).collect();
    FullPotentialData::new(PotentialOutcomeSet::Set1, data.clone(), po)
}

/// Scores on the leading principal component of `columns`, with the
/// eigenvector's largest-magnitude loading made positive.
pub fn first_principal_component(data: &Dataset, columns: &[usize], basis: PcaBasis) -> Result<Vec<f64>> {
    data.check_columns(columns)?;
    if columns.is_empty() {
        return Err(Error::invalid("principal components need at least one column"));
    }
    let n = data.n();
    if n < 2 {
        return Err(Error::invalid("principal components need at least two units"));
    }
    let p = columns.len();
    let mut x = data.matrix(columns);
    for (c, &name) in columns.iter().enumerate() {
        let col = x.column(c);
        let m = col.mean();
        let sd = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt();
        let scale = match basis {
            PcaBasis::Correlation if sd > 0.0 => sd,
            PcaBasis::Correlation => return Err(Error::invalid(format!("column {name} is constant"))),
            PcaBasis::Covariance => 1.0,
        };
        x.column_mut(c).apply(|v| *v = (*v - m) / scale);
    }
    let cross: DMatrix<f64> = x.transpose() * &x / (n - 1) as f64;
    let eig = SymmetricEigen::new(cross);
    let lead = (0..p)
        .max_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(b.cmp(&a)))
        .expect("nonempty");
    let mut v: Vec<f64> = eig.eigenvectors.column(lead).iter().copied().collect();
    let pivot = (0..p).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a))).expect("nonempty");
    if v[pivot] < 0.0 {
        v.iter_mut().for_each(|e| *e = -*e);
    }
    Ok((0..n).map(|i| x.row(i).iter().zip(&v).map(|(a, b)| a * b).sum()).collect())
}

/// Nearest donor among `donors` (sorted by score, then id) to `x`; ties go to the lowest id.
fn nearest_donor(donors: &[(f64, u64, usize)], x: f64) -> usize {
    let pos = donors.partition_point(|d| d.0 <= x);
    let run_start = |mut k: usize| {
        while k > 0 && donors[k - 1].0 == donors[k].0 {
            k -= 1;
        }
        k
    };
    let below = (pos > 0).then(|| run_start(pos - 1));
    let above = (pos < donors.len()).then(|| run_start(pos));
    match (below, above) {
        (Some(b), None) => donors[b].2,
        (None, Some(a)) => donors[a].2,
        (Some(b), Some(a)) => {
            let db = (x - donors[b].0).abs();
            let da = (x - donors[a].0).abs();
            if db < da || (db == da && donors[b].1 < donors[a].1) {
                donors[b].2
            } else {
                donors[a].2
            }
        }
        (None, None) => unreachable!("donor pool checked nonempty"),
    }
}

/// Potential outcomes imputed from the observed outcome of the unit at each
/// other level whose PC1 score is closest.
pub fn impute_set2(data: &Dataset, pca_columns: &[usize], basis: PcaBasis) -> Result<FullPotentialData> {
    let pc1 = first_principal_component(data, pca_columns, basis)?;
    let z = data.levels();
    let t = data.treatment();
    let ids = data.ids();
    let mut pools: Vec<Vec<(f64, u64, usize)>> = vec![Vec::new(); z];
    for i in 0..data.n() {
        pools[t[i]].push((pc1[i], ids[i], i));
    }
    if let Some(level) = pools.iter().position(Vec::is_empty) {
        return Err(Error::EmptyLevel { level });
    }
    for pool in &mut pools {
        pool.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }
    let y = data.outcome();
    let po = (0..data.n())
        .map(|i| {
            (0..z)
                .map(|level| if level == t[i] { y[i] } else { y[nearest_donor(&pools[level], pc1[i])] })
                .collect()
        })
        .collect();
    Ok(FullPotentialData::new(PotentialOutcomeSet::Set2, data.clone(), po))
}

/// One simulated observational dataset.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub data: Dataset,
    /// Covariates the assignment model used.
    pub assignment_columns: Vec<usize>,
}

/// Redraws treatment from a multinomial logit fitted on `n_covariates`
/// columns sampled from `candidates`, and reveals the matching potential outcome.
pub fn simulate_replication(full: &FullPotentialData, candidates: &[usize], n_covariates: usize, seed: u64) -> Result<Replicate> {
    if n_covariates > candidates.len() {
        return Err(Error::invalid(format!("cannot pick {n_covariates} of {} covariates", candidates.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = sample(&mut rng, candidates.len(), n_covariates).into_iter().map(|k| candidates[k]).collect();
    chosen.sort_unstable();
    let base = &full.base;
    let model = fit_multinomial_logit(base, &chosen)?;
    let mut t_sim = Vec::with_capacity(base.n());
    for i in 0..base.n() {
        let probs = unit_probs(&model, base, i);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut level = probs.len() - 1;
        for (l, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                level = l;
                break;
            }
        }
        t_sim.push(level);
    }
    let y_sim: Vec<f64> = t_sim.iter().enumerate().map(|(i, &l)| full.po[i][l]).collect();
    let data = base.with_treatment(t_sim)?.with_outcome(y_sim)?;
    debug_assert_eq!(model.levels(), base.levels());
    Ok(Replicate { data, assignment_columns: chosen })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    SubclassMeans { k: usize },
    SubclassRegression { k: usize },
    Naive,
    StandardRegression,
    Iptw,
}

impl EstimatorSpec {
    pub fn name(&self) -> String {
        match self {
            EstimatorSpec::SubclassMeans { k } => format!("subclass_means_K{k}"),
            EstimatorSpec::SubclassRegression { k } => format!("subclass_regression_K{k}"),
            EstimatorSpec::Naive => "naive".into(),
            EstimatorSpec::StandardRegression => "standard_regression".into(),
            EstimatorSpec::Iptw => "iptw".into(),
        }
    }

    /// The seven comparison arms: subclassification with and without
    /// regression at `K ∈ {5, 15}`, naive, standard regression and IPTW.
    pub fn standard_set() -> Vec<EstimatorSpec> {
        vec![
            EstimatorSpec::SubclassMeans { k: 5 },
            EstimatorSpec::SubclassMeans { k: 15 },
            EstimatorSpec::SubclassRegression { k: 5 },
            EstimatorSpec::SubclassRegression { k: 15 },
            EstimatorSpec::Naive,
            EstimatorSpec::StandardRegression,
            EstimatorSpec::Iptw,
        ]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub estimators: Vec<EstimatorSpec>,
    pub replications: usize,
    /// Columns the assignment model may draw from.
    pub candidate_columns: Vec<usize>,
    pub n_covariates: usize,
    /// Columns of the ordered-logit balancing score.
    pub gps_columns: Vec<usize>,
    /// Regression adjustment set for the regression-based estimators.
    pub adjustment: Vec<usize>,
    /// Continuous columns for E3 trimming.
    pub continuous_columns: Vec<usize>,
    pub elimination: EliminationRule,
    pub bootstrap_b: usize,
    pub max_retries: usize,
    pub seed: u64,
}

/// Estimates from one replication, in estimator order.
#[derive(Debug, Clone)]
pub struct ReplicationResult {
    pub m: usize,
    /// Redraws needed before the replication succeeded.
    pub retries: usize,
    pub tables: Vec<EffectTable>,
}

/// Runs every configured estimator on one replicated dataset.
pub fn run_estimators(data: &Dataset, config: &StudyConfig, seed: u64) -> Result<Vec<EffectTable>> {
    let gps = fit_ordered_logit(data, &config.gps_columns)?;
    let (trimmed, support) = trim_common_support(data, &gps, config.elimination, &config.continuous_columns)?;
    let scores = support.refit.scores(&trimmed);
    config
        .estimators
        .iter()
        .map(|spec| match *spec {
            EstimatorSpec::SubclassMeans { k } => estimate_subclass_means(&trimmed, &partition_dataset(&trimmed, &scores, k)?),
            EstimatorSpec::SubclassRegression { k } => {
                let part = partition_dataset(&trimmed, &scores, k)?;
                Ok(estimate_subclass_regression(&trimmed, &part, &config.adjustment)?.0)
            }
            EstimatorSpec::Naive => estimate_naive(data),
            EstimatorSpec::StandardRegression => estimate_standard_regression(data, &config.adjustment),
            EstimatorSpec::Iptw => estimate_iptw(data, &gps, config.bootstrap_b, seed),
        })
        .collect()
}

fn replicate_once(full: &FullPotentialData, config: &StudyConfig, m: usize) -> Option<ReplicationResult> {
    let mut seeds = stream_rng(config.seed, m as u64);
    for attempt in 0..=config.max_retries {
        let rep_seed = seeds.next_u64();
        let est_seed = seeds.next_u64();
        let result = simulate_replication(full, &config.candidate_columns, config.n_covariates, rep_seed)
            .and_then(|rep| run_estimators(&rep.data, config, est_seed));
        if let Ok(tables) = result {
            return Some(ReplicationResult { m, retries: attempt, tables });
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSummary {
    pub t: usize,
    pub s: usize,
    pub truth: f64,
    pub mean_bias: f64,
    pub sd_bias: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub pairs: Vec<PairSummary>,
    /// Mean over replications and pairs of the coverage indicator.
    pub average_coverage: f64,
    /// Fraction of replications where every pairwise interval covered.
    pub complete_coverage: f64,
}

impl EstimatorSummary {
    pub fn pair(&self, t: usize, s: usize) -> &PairSummary {
        self.pairs.iter().find(|p| p.t == t + 1 && p.s == s + 1).expect("pair present")
    }

    /// Mean absolute bias over every pair.
    pub fn mean_abs_bias(&self) -> f64 {
        self.pairs.iter().map(|p| p.mean_bias.abs()).sum::<f64>() / self.pairs.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub set: Option<PotentialOutcomeSet>,
    pub replications_requested: usize,
    pub replications_completed: usize,
    pub replications_failed: usize,
    pub total_retries: usize,
    pub estimators: Vec<EstimatorSummary>,
}

impl SimulationSummary {
    pub fn estimator(&self, name: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.estimator == name)
    }
}

/// Bias and coverage aggregation over completed replications.
pub fn summarize(names: &[String], true_pate: &[Vec<f64>], replications: &[Vec<EffectTable>]) -> Vec<EstimatorSummary> {
    let m = replications.len() as f64;
    names
        .iter()
        .enumerate()
        .map(|(e, name)| {
            let Some(first) = replications.first() else {
                return EstimatorSummary { estimator: name.clone(), pairs: Vec::new(), average_coverage: f64::NAN, complete_coverage: f64::NAN };
            };
            let npairs = first[e].pairs.len();
            let mut all_covered = 0usize;
            let mut covered_total = 0usize;
            let mut bias: Vec<Vec<f64>> = vec![Vec::with_capacity(replications.len()); npairs];
            let mut covered = vec![0usize; npairs];
            for rep in replications {
                let table = &rep[e];
                let mut all = true;
                for (j, pair) in table.pairs.iter().enumerate() {
                    let truth = true_pate[pair.t - 1][pair.s - 1];
                    bias[j].push(pair.estimate - truth);
                    let c = pair.covers(truth);
                    covered[j] += usize::from(c);
                    covered_total += usize::from(c);
                    all &= c;
                }
                all_covered += usize::from(all);
            }
            let pairs = first[e]
                .pairs
                .iter()
                .enumerate()
                .map(|(j, p)| {
                    let mb = mean(&bias[j]);
                    let sd = if bias[j].len() > 1 {
                        (bias[j].iter().map(|b| (b - mb) * (b - mb)).sum::<f64>() / (bias[j].len() - 1) as f64).sqrt()
                    } else {
                        0.0
                    };
                    PairSummary { t: p.t, s: p.s, truth: true_pate[p.t - 1][p.s - 1], mean_bias: mb, sd_bias: sd, coverage: covered[j] as f64 / m }
                })
                .collect();
            EstimatorSummary {
                estimator: name.clone(),
                pairs,
                average_coverage: covered_total as f64 / (m * npairs as f64),
                complete_coverage: all_covered as f64 / m,
            }
        })
        .collect()
}

/// Runs `config.replications` replications and summarizes bias and coverage.
/// Output depends only on `(full, config)`, not on thread count.
pub fn run_study(full: &FullPotentialData, config: &StudyConfig) -> Result<SimulationSummary> {
    if config.replications == 0 {
        return Err(Error::invalid("at least one replication is required"));
    }
    if config.estimators.is_empty() {
        return Err(Error::invalid("no estimators configured"));
    }
    let results = par::map_range(config.replications, |m| replicate_once(full, config, m));
    let done: Vec<ReplicationResult> = results.into_iter().flatten().collect();
    let names: Vec<String> = config.estimators.iter().map(EstimatorSpec::name).collect();
    let tables: Vec<Vec<EffectTable>> = done.iter().map(|r| r.tables.clone()).collect();
    Ok(SimulationSummary {
        set: Some(full.set),
        replications_requested: config.replications,
        replications_completed: done.len(),
        replications_failed: config.replications - done.len(),
        total_retries: done.iter().map(|r| r.retries).sum(),
        estimators: summarize(&names, &full.true_pate, &tables),
    })
}
