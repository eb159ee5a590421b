use ordsub::simulation::{impute_set1, impute_set2, run_study, EstimatorSpec, PotentialOutcomeSet, SimulationSummary, StudyConfig};
use ordsub::Dataset;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Stage};
use crate::ingest::IngestSummary;
use crate::provenance::Provenance;

#[derive(Debug, Clone, Serialize)]
pub struct SetReport {
    pub set: PotentialOutcomeSet,
    /// True average effect of each level against the lowest, levels 2..Z.
    pub true_effects_vs_first: Vec<f64>,
    pub summary: SimulationSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub provenance: Provenance,
    pub ingest: IngestSummary,
    pub study: StudyConfig,
    pub sets: Vec<SetReport>,
}

pub fn study_config(config: &RunConfig) -> Result<StudyConfig, CliError> {
    let sim = &config.simulation;
    let candidates = config.gps_indices();
    if sim.n_covariates == 0 || sim.n_covariates > candidates.len() {
        return Err(CliError::Config(format!(
            "simulation.n_covariates = {} must lie in 1..={} (the number of gps covariates)",
            sim.n_covariates,
            candidates.len()
        )));
    }
    Ok(StudyConfig {
        estimators: sim.estimators.clone().unwrap_or_else(EstimatorSpec::standard_set),
        replications: sim.replications(),
        candidate_columns: candidates.clone(),
        n_covariates: sim.n_covariates,
        gps_columns: candidates,
        adjustment: config.adjustment_indices(sim.adjustment),
        continuous_columns: config.continuous_indices(),
        elimination: config.design.elimination,
        bootstrap_b: sim.bootstrap,
        max_retries: sim.max_retries,
        seed: config.seed,
    })
}

/// Builds each configured potential-outcome set from `data` and runs the study on it.
pub fn run(config: &RunConfig, data: &Dataset, ingest: IngestSummary, provenance: Provenance) -> Result<SimulationReport, CliError> {
    let study = study_config(config)?;
    let pca_columns: Vec<usize> = match &config.simulation.pca_columns {
        Some(names) => names.iter().filter_map(|n| config.covariate_index(n)).collect(),
        None => (0..config.covariates.len()).collect(),
    };
    let at = CliError::at(Stage::Simulation);
    let mut sets = Vec::new();
    for &set in &config.simulation.sets {
        let full = match set {
            PotentialOutcomeSet::Set1 => impute_set1(data),
            PotentialOutcomeSet::Set2 => impute_set2(data, &pca_columns, config.simulation.pca).map_err(at)?,
        };
        let summary = run_study(&full, &study).map_err(at)?;
        let true_effects_vs_first = (1..data.levels()).map(|t| full.true_pate[t][0]).collect();
        sets.push(SetReport { set, true_effects_vs_first, summary });
    }
    Ok(SimulationReport { provenance, ingest, study, sets })
}
