//! Markdown renderings of effect tables, balance audits and simulation
//! summaries. Numbers are rounded to three decimals.

use std::fmt::Write;

use crate::balance::BalanceMatrix;
use crate::data::Dataset;
use crate::estimation::EffectTable;
use crate::simulation::SimulationSummary;

fn label(levels: Option<&[String]>, one_based: usize) -> String {
    levels.and_then(|l| l.get(one_based - 1).cloned()).unwrap_or_else(|| one_based.to_string())
}

fn fmt3(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.3}")
    } else {
        "NA".to_string()
    }
}

fn opt3(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt3)
}

/// One row per estimator, one column per pair; `**` marks intervals excluding zero.
pub fn effect_tables(tables: &[EffectTable], levels: Option<&[String]>) -> String {
    let mut out = String::new();
    let Some(first) = tables.first() else {
        return out;
    };
    let mut header = String::from("| Estimator |");
    let mut rule = String::from("|---|");
    for p in &first.pairs {
        write!(header, " {} vs {} |", label(levels, p.t), label(levels, p.s)).unwrap();
        rule.push_str("---|");
    }
    writeln!(out, "{header}\n{rule}").unwrap();
    for table in tables {
        let mut name = table.estimator.clone();
        if let Some(k) = table.metadata.k {
            write!(name, " (K={k})").unwrap();
        }
        if !table.metadata.adjustment.is_empty() {
            write!(name, " [{}]", table.metadata.adjustment.join(", ")).unwrap();
        }
        write!(out, "| {name} |").unwrap();
        for p in &table.pairs {
            let star = if p.significant() { "**" } else { "" };
            write!(out, " {} ({}){star} |", fmt3(p.estimate), fmt3(p.se)).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Covariate list with overall and subclass-averaged τ.
pub fn balance_table(matrix: &BalanceMatrix, data: &Dataset) -> String {
    let mut out = String::from("| Covariate | Type | τ | p-value | weighted τ̄ |\n|---|---|---|---|---|\n");
    for (c, &j) in matrix.columns.iter().enumerate() {
        let kind = format!("{:?}", data.columns()[j].kind).to_lowercase();
        let raw = matrix.tau_raw_p[c];
        let p = raw.map(|r| if r.p_value < 0.001 { "<0.001".to_string() } else { fmt3(r.p_value) });
        writeln!(
            out,
            "| {} | {kind} | {} | {} | {} |",
            matrix.names[c],
            opt3(raw.map(|r| r.tau)),
            p.unwrap_or_else(|| "NA".into()),
            opt3(matrix.tau_bar_p[c])
        )
        .unwrap();
    }
    out
}

/// A row of the significant-test proportion table.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SignificanceRow {
    pub elimination: String,
    pub k: usize,
    pub alpha_01: f64,
    pub alpha_05: f64,
}

pub fn significance_table(rows: &[SignificanceRow]) -> String {
    let mut out = String::from("| Elimination | K | α = 0.01 | α = 0.05 |\n|---|---|---|---|\n");
    for r in rows {
        writeln!(out, "| {} | {} | {} | {} |", r.elimination, r.k, fmt3(r.alpha_01), fmt3(r.alpha_05)).unwrap();
    }
    out
}

/// Coverage columns followed by mean bias (SD) for each comparison against level 1.
pub fn simulation_table(summary: &SimulationSummary, levels: Option<&[String]>) -> String {
    let mut out = String::new();
    let Some(first) = summary.estimators.first() else {
        return out;
    };
    let vs_first: Vec<usize> = first.pairs.iter().filter(|p| p.s == 1).map(|p| p.t).collect();
    let mut header = String::from("| Estimator | Average coverage | Complete coverage |");
    let mut rule = String::from("|---|---|---|");
    for &t in &vs_first {
        write!(header, " {} vs {} |", label(levels, t), label(levels, 1)).unwrap();
        rule.push_str("---|");
    }
    writeln!(out, "{header}\n{rule}").unwrap();
    for e in &summary.estimators {
        write!(out, "| {} | {} | {} |", e.estimator, fmt3(e.average_coverage), fmt3(e.complete_coverage)).unwrap();
        for &t in &vs_first {
            let p = e.pairs.iter().find(|p| p.t == t && p.s == 1).expect("pair");
            write!(out, " {} ({}) |", fmt3(p.mean_bias), fmt3(p.sd_bias)).unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn effect_layout() {
        let t = EffectTable::from_level_means("naive", &[0.0, 1.0, 0.1], &DMatrix::from_diagonal_element(3, 3, 0.01));
        let md = effect_tables(&[t], None);
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines[0], "| Estimator | 2 vs 1 | 3 vs 1 | 3 vs 2 |");
        assert_eq!(lines[2], "| naive | 1.000 (0.141)** | 0.100 (0.141) | -0.900 (0.141)** |");
    }
}
