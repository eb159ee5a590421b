//! Markdown versions of the JSON reports.

use std::fmt::Write;

use ordsub::report::{balance_table, effect_tables, significance_table, simulation_table, SignificanceRow};
use ordsub::Dataset;

use crate::pipeline::{GpsSummary, KStatus, RunReport};
use crate::provenance::Provenance;
use crate::simulate::SimulationReport;

fn provenance(out: &mut String, p: &Provenance) {
    writeln!(out, "## Provenance\n").unwrap();
    writeln!(out, "| Field | Value |\n|---|---|").unwrap();
    writeln!(out, "| tool | {} {} (core {}) |", p.tool, p.version, p.core_version).unwrap();
    writeln!(out, "| mode | {:?} |", p.mode).unwrap();
    writeln!(out, "| config sha256 | `{}` |", p.config_sha256).unwrap();
    writeln!(out, "| seed | {} |\n", p.seed).unwrap();
}

fn gps(out: &mut String, title: &str, g: &GpsSummary) {
    writeln!(out, "### {title}\n").unwrap();
    writeln!(out, "| Covariate | β | SE |\n|---|---|---|").unwrap();
    for ((name, b), se) in g.covariates.iter().zip(&g.beta).zip(&g.se_beta) {
        writeln!(out, "| {name} | {b:.3} | {se:.3} |").unwrap();
    }
    let theta: Vec<String> = g.theta.iter().map(|t| format!("{t:.3}")).collect();
    writeln!(out, "\nThresholds: {}. Log-likelihood {:.3} after {} iterations.\n", theta.join(", "), g.loglik, g.iterations).unwrap();
}

pub fn run_report(r: &RunReport, data: &Dataset, levels: &[String]) -> String {
    let mut out = String::from("# Subclassification report\n\n");
    provenance(&mut out, &r.provenance);
    writeln!(
        out,
        "## Data\n\n{} rows read, {} dropped for missing values, {} analysed.\n",
        r.ingest.rows_read, r.ingest.rows_dropped_missing, r.ingest.rows_retained
    )
    .unwrap();
    writeln!(out, "## Balancing score\n").unwrap();
    gps(&mut out, "Ordered logit on all units", &r.gps);
    writeln!(
        out,
        "Common support rule {}: {} of {} units retained.\n",
        r.support.rule, r.support.retained_n, r.support.original_n
    )
    .unwrap();
    if r.support.rule != ordsub::design::EliminationRule::E1 {
        gps(&mut out, "Refit on retained units", &r.support.refit);
    }

    let rows: Vec<SignificanceRow> = r
        .subclassifications
        .iter()
        .filter_map(|s| {
            s.significance.map(|sig| SignificanceRow { elimination: r.support.rule.to_string(), k: s.k, alpha_01: sig.alpha_01, alpha_05: sig.alpha_05 })
        })
        .collect();
    if !rows.is_empty() {
        writeln!(out, "## Proportion of significant balance tests\n\n{}", significance_table(&rows)).unwrap();
    }

    for s in &r.subclassifications {
        writeln!(out, "## K = {}\n", s.k).unwrap();
        let sizes: Vec<String> = s.partition.n_k.iter().map(ToString::to_string).collect();
        let smallest = s.partition.cell_counts.iter().flatten().min().copied().unwrap_or(0);
        writeln!(out, "Subclass sizes: {}. Smallest cell: {smallest} (at least {} required).\n", sizes.join(", "), s.validation.min_cell)
            .unwrap();
        match &s.outcome {
            KStatus::InvalidPartition { reason } | KStatus::GateFailed { reason } => writeln!(out, "> Skipped: {reason}\n").unwrap(),
            KStatus::Estimated | KStatus::AuditOnly => {}
        }
        if let Some(m) = &s.balance {
            writeln!(out, "### Covariate balance\n\n{}", balance_table(m, data)).unwrap();
        }
        if !s.global_tests.is_empty() {
            writeln!(out, "### Global tests\n\n| Model | Adjustment | F | df | p-value |\n|---|---|---|---|---|").unwrap();
            for lt in &s.global_tests {
                let g = &lt.test;
                let name = if g.adjusted { "ANCOVA" } else { "ANOVA" };
                writeln!(out, "| {name} | {} | {:.3} | ({}, {}) | {:.3e} |", lt.adjustment, g.statistic, g.df.0, g.df.1, g.p_value).unwrap();
            }
            out.push('\n');
        }
        if !s.effects.is_empty() {
            writeln!(out, "### Effects\n\n{}", effect_tables(&s.effects, Some(levels))).unwrap();
        }
        if let Some(p) = &s.plots {
            writeln!(out, "Plot data: {} box-plot cells, {} Love-plot records, {} z statistics.\n", p.boxplots.len(), p.love.len(), p.z_statistics.len())
                .unwrap();
        }
    }
    if !r.baselines.is_empty() {
        writeln!(out, "## Comparison estimators\n\n{}", effect_tables(&r.baselines, Some(levels))).unwrap();
    }
    if !r.notes.is_empty() {
        writeln!(out, "## Notes\n").unwrap();
        for n in &r.notes {
            writeln!(out, "- {n}").unwrap();
        }
    }
    out
}

pub fn simulation_report(r: &SimulationReport, levels: &[String]) -> String {
    let mut out = String::from("# Simulation report\n\n");
    provenance(&mut out, &r.provenance);
    writeln!(
        out,
        "{} replications; assignment model on {} of {} covariates; bootstrap B = {}.\n",
        r.study.replications,
        r.study.n_covariates,
        r.study.candidate_columns.len(),
        r.study.bootstrap_b
    )
    .unwrap();
    for s in &r.sets {
        writeln!(out, "## {:?}\n", s.set).unwrap();
        let truth: Vec<String> = s.true_effects_vs_first.iter().map(|v| format!("{v:.3}")).collect();
        writeln!(out, "True effects against {}: {}.\n", levels[0], truth.join(", ")).unwrap();
        writeln!(
            out,
            "{} of {} replications completed ({} redraws).\n",
            s.summary.replications_completed, s.summary.replications_requested, s.summary.total_retries
        )
        .unwrap();
        writeln!(out, "{}", simulation_table(&s.summary, Some(levels))).unwrap();
    }
    out
}
