//! Design → balance gate → estimation, for one ingested dataset.

use ordsub::balance::{balance_audit, balance_gate, emit_plot_data, significant_proportion, BalanceMatrix, GateDecision, PlotBundle};
use ordsub::design::{partition_dataset, trim_common_support, validate_partition, DroppedUnit, EliminationRule, SubclassPartition, ValidationReport};
use ordsub::estimation::{
    estimate_iptw, estimate_naive, estimate_standard_regression, estimate_subclass_means, estimate_subclass_regression, global_test,
    EffectMetadata, EffectTable, GlobalTest,
};
use ordsub::{fit_ordered_logit, Dataset, OrdinalFit};
use serde::Serialize;

use crate::config::{Adjustment, RunConfig};
use crate::error::{CliError, Stage, EXIT_GATE_STOP, EXIT_OK};
use crate::ingest::IngestSummary;
use crate::provenance::Provenance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Analyze,
    Audit,
    Simulate,
}

#[derive(Debug, Clone, Serialize)]
pub struct GpsSummary {
    pub covariates: Vec<String>,
    pub beta: Vec<f64>,
    pub se_beta: Vec<f64>,
    pub theta: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl GpsSummary {
    fn new(fit: &OrdinalFit, data: &Dataset) -> Self {
        GpsSummary {
            covariates: fit.columns.iter().map(|&j| data.columns()[j].name.clone()).collect(),
            beta: fit.beta.clone(),
            se_beta: (0..fit.beta.len()).map(|j| fit.se_beta(j)).collect(),
            theta: fit.theta.clone(),
            loglik: fit.loglik,
            iterations: fit.iterations,
            converged: fit.converged,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SupportSummary {
    pub rule: EliminationRule,
    pub original_n: usize,
    pub retained_n: usize,
    pub dropped: Vec<DroppedUnit>,
    pub refit: GpsSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignificanceSummary {
    pub alpha_01: f64,
    pub alpha_05: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LabelledTest {
    pub adjustment: &'static str,
    #[serde(flatten)]
    pub test: GlobalTest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum KStatus {
    Estimated,
    AuditOnly,
    InvalidPartition { reason: String },
    GateFailed { reason: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct SubclassReport {
    pub k: usize,
    pub outcome: KStatus,
    pub validation: ValidationReport,
    pub partition: SubclassPartition,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub balance: Option<BalanceMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub significance: Option<SignificanceSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateDecision>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub global_tests: Vec<LabelledTest>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub effects: Vec<EffectTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plots: Option<PlotBundle>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub provenance: Provenance,
    pub ingest: IngestSummary,
    pub gps: GpsSummary,
    pub support: SupportSummary,
    pub subclassifications: Vec<SubclassReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub baselines: Vec<EffectTable>,
    pub notes: Vec<String>,
}

impl RunReport {
    /// 4 when estimation was requested but every K stopped at the balance gate.
    pub fn exit_code(&self) -> i32 {
        let estimated = self.subclassifications.iter().any(|s| s.outcome == KStatus::Estimated);
        let gate_stops = self.subclassifications.iter().any(|s| matches!(s.outcome, KStatus::GateFailed { .. }));
        if self.provenance.mode == Mode::Analyze && !estimated && gate_stops {
            EXIT_GATE_STOP
        } else {
            EXIT_OK
        }
    }
}

fn adjustment_label(adj: Adjustment) -> &'static str {
    match adj {
        Adjustment::None => "none",
        Adjustment::A1 => "A1",
        Adjustment::A2 => "A2",
    }
}

fn metadata(k: Option<usize>, rule: Option<EliminationRule>, adj: Option<Adjustment>) -> EffectMetadata {
    EffectMetadata { k, elimination: rule, adjustment: adj.map(|a| vec![adjustment_label(a).to_string()]).unwrap_or_default() }
}

fn estimate_for_k(config: &RunConfig, data: &Dataset, partition: &SubclassPartition) -> Result<(Vec<LabelledTest>, Vec<EffectTable>), CliError> {
    let rule = Some(config.design.elimination);
    let k = Some(partition.k);
    let at = CliError::at(Stage::Estimation);
    let mut tests = vec![LabelledTest { adjustment: adjustment_label(Adjustment::None), test: global_test(data, partition, &[]).map_err(at)? }];
    let mut effects = vec![estimate_subclass_means(data, partition).map_err(at)?.with_metadata(metadata(k, rule, None))];
    for &adj in &config.estimation.adjustment {
        let cols = config.adjustment_indices(adj);
        if !cols.is_empty() {
            tests.push(LabelledTest { adjustment: adjustment_label(adj), test: global_test(data, partition, &cols).map_err(at)? });
        }
        let (table, _) = estimate_subclass_regression(data, partition, &cols).map_err(at)?;
        effects.push(table.with_metadata(metadata(k, rule, Some(adj))));
    }
    Ok((tests, effects))
}

fn baselines(config: &RunConfig, data: &Dataset, fit: &OrdinalFit) -> Result<Vec<EffectTable>, CliError> {
    let at = CliError::at(Stage::Estimation);
    let mut out = vec![estimate_naive(data).map_err(at)?];
    for &adj in &config.estimation.adjustment {
        let table = estimate_standard_regression(data, &config.adjustment_indices(adj)).map_err(at)?;
        out.push(table.with_metadata(metadata(None, None, Some(adj))));
    }
    out.push(estimate_iptw(data, fit, config.estimation.bootstrap, config.seed).map_err(at)?);
    Ok(out)
}

/// Runs the design and balance stages, and estimation when `mode` is `Analyze`.
pub fn run(config: &RunConfig, data: &Dataset, ingest: IngestSummary, provenance: Provenance) -> Result<RunReport, CliError> {
    let mode = provenance.mode;
    let gps_cols = config.gps_indices();
    let fit = fit_ordered_logit(data, &gps_cols).map_err(CliError::at(Stage::GpsFit))?;
    let (trimmed, support) =
        trim_common_support(data, &fit, config.design.elimination, &config.continuous_indices()).map_err(CliError::at(Stage::Trim))?;
    let refit = &support.refit;
    let scores = refit.scores(&trimmed);
    let audit_cols = config.audit_indices();
    let z = data.levels();
    let mut notes = Vec::new();

    let mut subclassifications = Vec::with_capacity(config.design.k.len());
    for &k in &config.design.k {
        let partition = partition_dataset(&trimmed, &scores, k).map_err(CliError::at(Stage::Subclassify))?;
        let validation = validate_partition(&partition, z, gps_cols.len());
        let mut report = SubclassReport {
            k,
            outcome: KStatus::AuditOnly,
            validation,
            partition,
            balance: None,
            significance: None,
            gate: None,
            global_tests: Vec::new(),
            effects: Vec::new(),
            plots: None,
        };
        if !report.validation.passed {
            let reason = format!(
                "partition fails the size rules ({} small cells, {} small subclasses); balance and effects not computed",
                report.validation.cell_violations.len(),
                report.validation.size_violations.len()
            );
            notes.push(format!("K={k}: {reason}"));
            report.outcome = KStatus::InvalidPartition { reason };
            subclassifications.push(report);
            continue;
        }
        let matrix = balance_audit(&trimmed, &report.partition, &audit_cols).map_err(CliError::at(Stage::Balance))?;
        let gate = balance_gate(&matrix, config.balance.alpha, config.balance.gate_multiplier);
        report.significance =
            Some(SignificanceSummary { alpha_01: significant_proportion(&matrix, 0.01), alpha_05: significant_proportion(&matrix, 0.05) });
        match mode {
            Mode::Audit => {
                report.plots = Some(
                    emit_plot_data(&trimmed, &report.partition, refit, &matrix, &config.continuous_indices())
                        .map_err(CliError::at(Stage::Balance))?,
                );
            }
            _ if !gate.passed => {
                let reason = format!(
                    "{:.3} of within-subclass τ tests are significant at α = {}, above the {:.3} limit; effects not estimated",
                    gate.proportion, gate.alpha, gate.threshold
                );
                notes.push(format!("K={k}: {reason}"));
                report.outcome = KStatus::GateFailed { reason };
            }
            _ => {
                let (tests, effects) = estimate_for_k(config, &trimmed, &report.partition)?;
                report.global_tests = tests;
                report.effects = effects;
                report.outcome = KStatus::Estimated;
            }
        }
        report.balance = Some(matrix);
        report.gate = Some(gate);
        subclassifications.push(report);
    }

    let baselines = if mode == Mode::Analyze { baselines(config, data, &fit)? } else { Vec::new() };
    if subclassifications.iter().any(|s| s.outcome == KStatus::Estimated) {
        notes.push("Subclass-weighted standard errors treat subclass boundaries as fixed and can understate variance.".into());
    }
    Ok(RunReport {
        provenance,
        ingest,
        gps: GpsSummary::new(&fit, data),
        support: SupportSummary {
            rule: support.rule,
            original_n: support.original_n,
            retained_n: support.retained_n,
            dropped: support.dropped.clone(),
            refit: GpsSummary::new(refit, &trimmed),
        },
        subclassifications,
        baselines,
        notes,
    })
}
