//! Declarative run configuration read from TOML.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use ordsub::design::EliminationRule;
use ordsub::simulation::{EstimatorSpec, PcaBasis, PotentialOutcomeSet};
use ordsub::ColumnKind;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Enters the balancing score and the full adjustment set.
    Gps,
    /// Like `Gps`, and also part of the reduced adjustment set.
    A1,
    /// Audited for balance only.
    Audit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateSpec {
    pub name: String,
    #[serde(default = "numeric")]
    pub kind: ColumnKind,
    #[serde(default = "gps")]
    pub role: Role,
}

fn numeric() -> ColumnKind {
    ColumnKind::Numeric
}

fn gps() -> Role {
    Role::Gps
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreatmentSpec {
    pub column: String,
    /// Labels from lowest to highest.
    pub levels: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adjustment {
    None,
    A1,
    A2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    #[serde(default = "default_k")]
    pub k: Vec<usize>,
    #[serde(default = "default_elimination")]
    pub elimination: EliminationRule,
}

fn default_k() -> Vec<usize> {
    vec![5, 10, 15]
}

fn default_elimination() -> EliminationRule {
    EliminationRule::E1
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig { k: default_k(), elimination: default_elimination() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalanceConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// The gate passes while the significant proportion is at most `gate_multiplier · alpha`.
    #[serde(default = "default_multiplier")]
    pub gate_multiplier: f64,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_multiplier() -> f64 {
    2.0
}

impl Default for BalanceConfig {
    fn default() -> Self {
        BalanceConfig { alpha: default_alpha(), gate_multiplier: default_multiplier() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    #[serde(default = "default_adjustment")]
    pub adjustment: Vec<Adjustment>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
}

fn default_adjustment() -> Vec<Adjustment> {
    vec![Adjustment::A2]
}

fn default_bootstrap() -> usize {
    ordsub::estimation::DEFAULT_BOOTSTRAP
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig { adjustment: default_adjustment(), bootstrap: default_bootstrap() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_sets")]
    pub sets: Vec<PotentialOutcomeSet>,
    /// Uses the original study size (2000 replications) unless `replications` is set.
    #[serde(default)]
    pub full_scale: bool,
    pub replications: Option<usize>,
    #[serde(default = "default_n_covariates")]
    pub n_covariates: usize,
    pub estimators: Option<Vec<EstimatorSpec>>,
    #[serde(default = "default_adjustment_sim")]
    pub adjustment: Adjustment,
    #[serde(default)]
    pub pca: PcaBasis,
    /// Covariates entering the Set 2 principal component; all covariates when absent.
    pub pca_columns: Option<Vec<String>>,
    #[serde(default = "default_sim_bootstrap")]
    pub bootstrap: usize,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
}

fn default_sets() -> Vec<PotentialOutcomeSet> {
    vec![PotentialOutcomeSet::Set1, PotentialOutcomeSet::Set2]
}

fn default_n_covariates() -> usize {
    15
}

fn default_adjustment_sim() -> Adjustment {
    Adjustment::A2
}

fn default_sim_bootstrap() -> usize {
    50
}

fn default_retries() -> usize {
    10
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            sets: default_sets(),
            full_scale: false,
            replications: None,
            n_covariates: default_n_covariates(),
            estimators: None,
            adjustment: default_adjustment_sim(),
            pca: PcaBasis::default(),
            pca_columns: None,
            bootstrap: default_sim_bootstrap(),
            max_retries: default_retries(),
        }
    }
}

impl SimulationConfig {
    pub fn replications(&self) -> usize {
        self.replications.unwrap_or(if self.full_scale { 2000 } else { 500 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// CSV path, resolved against the config file's directory.
    pub input: PathBuf,
    /// Optional column of unit identifiers; rows are numbered from 0 otherwise.
    pub id: Option<String>,
    pub outcome: String,
    pub treatment: TreatmentSpec,
    pub covariates: Vec<CovariateSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default)]
    pub balance: BalanceConfig,
    #[serde(default)]
    pub estimation: EstimationConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; a relative `input` is taken relative to the file.
    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        if config.input.is_relative() {
            if let Some(dir) = path.parent() {
                config.input = dir.join(&config.input);
            }
        }
        Ok((config, text))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.treatment.levels.len() < 2 {
            return bad("treatment needs at least two levels".into());
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.treatment.levels.iter().find(|l| !seen.insert(l.as_str())) {
            return bad(format!("treatment level `{dup}` is listed twice"));
        }
        let mut names = HashSet::new();
        let referenced = self
            .covariates
            .iter()
            .map(|c| c.name.as_str())
            .chain([self.outcome.as_str(), self.treatment.column.as_str()])
            .chain(self.id.as_deref());
        for name in referenced {
            if !names.insert(name) {
                return bad(format!("column `{name}` is referenced more than once"));
            }
        }
        if self.gps_indices().is_empty() {
            return bad("at least one covariate must have role gps or a1".into());
        }
        if self.design.k.is_empty() || self.design.k.contains(&0) {
            return bad("K values must be at least 1".into());
        }
        if !(self.balance.alpha > 0.0 && self.balance.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.balance.alpha));
        }
        if self.balance.gate_multiplier.is_nan() || self.balance.gate_multiplier <= 0.0 {
            return bad("gate_multiplier must be positive".into());
        }
        if self.estimation.bootstrap < 2 || self.simulation.bootstrap < 2 {
            return bad("bootstrap needs at least two resamples".into());
        }
        if self.simulation.replications() == 0 {
            return bad("at least one replication is required".into());
        }
        if let Some(cols) = &self.simulation.pca_columns {
            if let Some(missing) = cols.iter().find(|c| self.covariate_index(c).is_none()) {
                return bad(format!("pca column `{missing}` is not a declared covariate"));
            }
        }
        if let Some(e) = &self.simulation.estimators {
            let bad_k = e.iter().any(|s| matches!(s, EstimatorSpec::SubclassMeans { k: 0 } | EstimatorSpec::SubclassRegression { k: 0 }));
            if e.is_empty() || bad_k {
                return bad("simulation estimators must be nonempty with K ≥ 1".into());
            }
        }
        Ok(())
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariates.iter().position(|c| c.name == name)
    }

    fn indices(&self, keep: impl Fn(&CovariateSpec) -> bool) -> Vec<usize> {
        self.covariates.iter().enumerate().filter_map(|(i, c)| keep(c).then_some(i)).collect()
    }

    pub fn gps_indices(&self) -> Vec<usize> {
        self.indices(|c| c.role != Role::Audit)
    }

    pub fn audit_indices(&self) -> Vec<usize> {
        (0..self.covariates.len()).collect()
    }

    /// Numeric balancing-score covariates, used by E3 trimming.
    pub fn continuous_indices(&self) -> Vec<usize> {
        self.indices(|c| c.role != Role::Audit && c.kind == ColumnKind::Numeric)
    }

    pub fn adjustment_indices(&self, adjustment: Adjustment) -> Vec<usize> {
        match adjustment {
            Adjustment::None => Vec::new(),
            Adjustment::A1 => self.indices(|c| c.role == Role::A1),
            Adjustment::A2 => self.gps_indices(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
input = "data.csv"
outcome = "y"
[treatment]
column = "t"
levels = ["low", "mid", "high"]
[[covariates]]
name = "age"
[[covariates]]
name = "smoker"
kind = "binary"
role = "a1"
[[covariates]]
name = "region"
kind = "ordinal"
role = "audit"
"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.design.k, vec![5, 10, 15]);
        assert_eq!(c.balance.alpha, 0.05);
        assert_eq!(c.gps_indices(), vec![0, 1]);
        assert_eq!(c.audit_indices(), vec![0, 1, 2]);
        assert_eq!(c.continuous_indices(), vec![0]);
        assert_eq!(c.adjustment_indices(Adjustment::A1), vec![1]);
        assert_eq!(c.simulation.replications(), 500);
    }

    #[test]
    fn rejects_bad_alpha_and_k() {
        let alpha = format!("{MINIMAL}\n[balance]\nalpha = 1.5\n");
        assert!(matches!(RunConfig::parse(&alpha), Err(CliError::Config(_))));
        let k = format!("{MINIMAL}\n[design]\nk = [0]\n");
        assert!(matches!(RunConfig::parse(&k), Err(CliError::Config(_))));
    }

    #[test]
    fn rejects_duplicate_columns() {
        let dup = MINIMAL.replace("name = \"smoker\"", "name = \"age\"");
        assert!(RunConfig::parse(&dup).is_err());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let typo = format!("{MINIMAL}\n[design]\nkk = [3]\n");
        assert!(RunConfig::parse(&typo).is_err());
    }
}
