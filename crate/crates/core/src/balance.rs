//! Covariate balance audit built on Kendall's τ_b between each covariate and
//! the ordinal treatment, overall and within subclasses.

use std::cmp::Ordering;

use serde::Serialize;

use crate::data::Dataset;
use crate::design::SubclassPartition;
use crate::error::{Error, Result};
use crate::ordinal::OrdinalFit;
use crate::par;
use crate::util::two_sided_p;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauResult {
    pub tau: f64,
    /// Standardized Kendall S under the tie-adjusted null variance.
    pub z: f64,
    pub p_value: f64,
    pub n: usize,
    /// Concordant minus discordant pairs.
    pub s: i64,
}

/// Sums of `t(t−1)`, `t(t−1)(t−2)` and `t(t−1)(2t+5)` over tie groups.
#[derive(Debug, Default, Clone, Copy)]
struct TieSums {
    pairs: u64,
    v1: f64,
    v2: f64,
    v0: f64,
}

impl TieSums {
    fn add(&mut self, t: u64) {
        if t < 2 {
            return;
        }
        let tf = t as f64;
        self.pairs += t * (t - 1) / 2;
        self.v1 += tf * (tf - 1.0);
        self.v2 += tf * (tf - 1.0) * (tf - 2.0);
        self.v0 += tf * (tf - 1.0) * (2.0 * tf + 5.0);
    }
}

fn tie_runs<T: Copy>(values: &[T], eq: impl Fn(T, T) -> bool) -> TieSums {
    let mut sums = TieSums::default();
    let mut run = 1u64;
    for w in values.windows(2) {
        if eq(w[0], w[1]) {
            run += 1;
        } else {
            sums.add(run);
            run = 1;
        }
    }
    sums.add(run);
    sums
}

/// Sorts `v` ascending and returns the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], &mut buf[..mid]) + merge_count(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Tie-corrected Kendall τ_b with a two-sided normal test, O(n log n).
pub fn kendall_tau_b(a: &[f64], b: &[f64]) -> Result<TauResult> {
    let n = a.len();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.len() });
    }
    if n < 2 {
        return Err(Error::invalid("Kendall tau needs at least two observations"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::invalid("Kendall tau inputs must not contain NaN"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| match a[i].total_cmp(&a[j]) {
        Ordering::Equal => b[i].total_cmp(&b[j]),
        o => o,
    });
    let sa: Vec<f64> = order.iter().map(|&i| a[i]).collect();
    let mut sb: Vec<f64> = order.iter().map(|&i| b[i]).collect();
    let ties_a = tie_runs(&sa, |x, y| x == y);
    let joint: Vec<(f64, f64)> = sa.iter().copied().zip(sb.iter().copied()).collect();
    let ties_joint = tie_runs(&joint, |x, y| x == y);
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut sb, &mut buf);
    let ties_b = tie_runs(&sb, |x, y| x == y);

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    if ties_a.pairs == n0 || ties_b.pairs == n0 {
        return Err(Error::ConstantVector);
    }
    let s = n0 as i64 - ties_a.pairs as i64 - ties_b.pairs as i64 + ties_joint.pairs as i64 - 2 * swaps as i64;
    let denom = ((n0 - ties_a.pairs) as f64 * (n0 - ties_b.pairs) as f64).sqrt();
    let tau = (s as f64 / denom).clamp(-1.0, 1.0);

    let nf = n as f64;
    let mut var = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - ties_a.v0 - ties_b.v0) / 18.0;
    if n > 2 {
        var += ties_a.v2 * ties_b.v2 / (9.0 * nf * (nf - 1.0) * (nf - 2.0));
    }
    var += ties_a.v1 * ties_b.v1 / (2.0 * nf * (nf - 1.0));
    let z = if var > 0.0 { s as f64 / var.sqrt() } else { 0.0 };
    Ok(TauResult { tau, z, p_value: two_sided_p(z), n, s })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlaggedCell {
    /// Position in the audited column list.
    pub covariate: usize,
    /// One-based subclass; 0 for the pre-subclassification test.
    pub subclass: usize,
}

/// τ statistics for each audited covariate, overall and per subclass.
#[derive(Debug, Clone, Serialize)]
pub struct BalanceMatrix {
    pub columns: Vec<usize>,
    pub names: Vec<String>,
    pub k: usize,
    pub w_k: Vec<f64>,
    /// `tau_pk[covariate][subclass]`; `None` where the cell was degenerate.
    pub tau_pk: Vec<Vec<Option<TauResult>>>,
    /// Weighted subclass-averaged τ, renormalized over non-flagged cells.
    pub tau_bar_p: Vec<Option<f64>>,
    pub tau_raw_p: Vec<Option<TauResult>>,
    pub flagged: Vec<FlaggedCell>,
}

impl BalanceMatrix {
    /// Every non-flagged within-subclass cell.
    pub fn cells(&self) -> impl Iterator<Item = &TauResult> {
        self.tau_pk.iter().flatten().flatten()
    }

    /// z statistics of every non-flagged within-subclass cell, covariate-major.
    pub fn z_statistics(&self) -> Vec<f64> {
        self.cells().map(|c| c.z).collect()
    }
}

fn tau_or_flag(a: &[f64], b: &[f64]) -> Result<Option<TauResult>> {
    match kendall_tau_b(a, b) {
        Ok(r) => Ok(Some(r)),
        Err(Error::ConstantVector) => Ok(None),
        Err(Error::InvalidInput(_)) if a.len() < 2 => Ok(None),
        Err(e) => Err(e),
    }
}

/// Kendall τ_b of each covariate in `columns` against treatment.
pub fn balance_audit(data: &Dataset, partition: &SubclassPartition, columns: &[usize]) -> Result<BalanceMatrix> {
    data.check_columns(columns)?;
    if partition.n() != data.n() {
        return Err(Error::DimensionMismatch { expected: data.n(), got: partition.n() });
    }
    let t: Vec<f64> = data.treatment().iter().map(|&l| l as f64).collect();
    let members: Vec<Vec<usize>> = (0..partition.k).map(|k| partition.members(k)).collect();
    let t_by_class: Vec<Vec<f64>> = members.iter().map(|m| m.iter().map(|&i| t[i]).collect()).collect();

    let per_column = par::map_slice(columns, |&j| -> Result<(Option<TauResult>, Vec<Option<TauResult>>)> {
        let col = data.column(j);
        let raw = tau_or_flag(&col, &t)?;
        let mut cells = Vec::with_capacity(partition.k);
        for (m, tk) in members.iter().zip(&t_by_class) {
            let xk: Vec<f64> = m.iter().map(|&i| col[i]).collect();
            cells.push(tau_or_flag(&xk, tk)?);
        }
        Ok((raw, cells))
    });

    let mut tau_pk = Vec::with_capacity(columns.len());
    let mut tau_raw_p = Vec::with_capacity(columns.len());
    let mut tau_bar_p = Vec::with_capacity(columns.len());
    let mut flagged = Vec::new();
    for (c, res) in per_column.into_iter().enumerate() {
        let (raw, cells) = res?;
        if raw.is_none() {
            flagged.push(FlaggedCell { covariate: c, subclass: 0 });
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, cell) in cells.iter().enumerate() {
            match cell {
                Some(r) => {
                    num += r.tau * partition.w_k[k];
                    den += partition.w_k[k];
                }
                None => flagged.push(FlaggedCell { covariate: c, subclass: k + 1 }),
            }
        }
        tau_bar_p.push((den > 0.0).then(|| num / den));
        tau_raw_p.push(raw);
        tau_pk.push(cells);
    }
    Ok(BalanceMatrix {
        columns: columns.to_vec(),
        names: columns.iter().map(|&j| data.columns()[j].name.clone()).collect(),
        k: partition.k,
        w_k: partition.w_k.clone(),
        tau_pk,
        tau_bar_p,
        tau_raw_p,
        flagged,
    })
}

/// Fraction of non-flagged within-subclass tests with `p < alpha`.
pub fn significant_proportion(matrix: &BalanceMatrix, alpha: f64) -> f64 {
    let (hits, total) = matrix.cells().fold((0usize, 0usize), |(h, n), c| (h + usize::from(c.p_value < alpha), n + 1));
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Balance gate: passes when the significant proportion at `alpha` does not
/// exceed `multiplier · alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GateDecision {
    pub alpha: f64,
    pub proportion: f64,
    pub threshold: f64,
    pub passed: bool,
}

pub fn balance_gate(matrix: &BalanceMatrix, alpha: f64, multiplier: f64) -> GateDecision {
    let proportion = significant_proportion(matrix, alpha);
    let threshold = multiplier * alpha;
    GateDecision { alpha, proportion, threshold, passed: proportion <= threshold }
}

/// Box-plot summary: quartiles by linear interpolation, Tukey 1.5·IQR fences.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub lower_whisker: f64,
    pub upper_whisker: f64,
    pub outliers: Vec<f64>,
}

fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn five_number(values: &[f64]) -> Option<FiveNumber> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&v, 0.25);
    let q3 = quantile_sorted(&v, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|x| *x >= lo_fence && *x <= hi_fence).collect();
    Some(FiveNumber {
        min: v[0],
        q1,
        median: quantile_sorted(&v, 0.5),
        q3,
        max: v[v.len() - 1],
        lower_whisker: inside.first().copied().unwrap_or(v[0]),
        upper_whisker: inside.last().copied().unwrap_or(v[v.len() - 1]),
        outliers: v.iter().copied().filter(|x| *x < lo_fence || *x > hi_fence).collect(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BoxCell {
    pub variable: String,
    pub subclass: usize,
    pub level: usize,
    pub n: usize,
    pub summary: Option<FiveNumber>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LoveRecord {
    pub covariate: String,
    pub tau_raw: Option<f64>,
    pub tau_bar: Option<f64>,
}

/// Data behind the balance figures for one partition.
#[derive(Debug, Clone, Serialize)]
pub struct PlotBundle {
    pub k: usize,
    /// Per (subclass, level) summaries of the linear predictor and each continuous covariate.
    pub boxplots: Vec<BoxCell>,
    pub love: Vec<LoveRecord>,
    /// Within-subclass z statistics for histogram overlays.
    pub z_statistics: Vec<f64>,
}

pub const LINEAR_PREDICTOR: &str = "linear_predictor";

pub fn emit_plot_data(
    data: &Dataset,
    partition: &SubclassPartition,
    fit: &OrdinalFit,
    matrix: &BalanceMatrix,
    continuous_columns: &[usize],
) -> Result<PlotBundle> {
    data.check_columns(continuous_columns)?;
    let z = data.levels();
    let mut variables: Vec<(String, Vec<f64>)> = vec![(LINEAR_PREDICTOR.to_string(), fit.scores(data))];
    variables.extend(continuous_columns.iter().map(|&j| (data.columns()[j].name.clone(), data.column(j))));
    let mut boxplots = Vec::new();
    for (name, values) in &variables {
        for k in 0..partition.k {
            for level in 0..z {
                let cell: Vec<f64> = partition
                    .members(k)
                    .into_iter()
                    .filter(|&i| data.treatment()[i] == level)
                    .map(|i| values[i])
                    .collect();
                boxplots.push(BoxCell {
                    variable: name.clone(),
                    subclass: k + 1,
                    level: level + 1,
                    n: cell.len(),
                    summary: five_number(&cell),
                });
            }
        }
    }
    let love = matrix
        .names
        .iter()
        .zip(&matrix.tau_raw_p)
        .zip(&matrix.tau_bar_p)
        .map(|((name, raw), bar)| LoveRecord { covariate: name.clone(), tau_raw: raw.map(|r| r.tau), tau_bar: *bar })
        .collect();
    Ok(PlotBundle { k: partition.k, boxplots, love, z_statistics: matrix.z_statistics() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_concordance() {
        let a: Vec<f64> = (0..20).map(|i| i as f64 * 1.5).collect();
        let r = kendall_tau_b(&a, &a).unwrap();
        assert_eq!(r.tau, 1.0);
        assert_eq!(r.s, 190);
    }

    #[test]
    fn constant_rejected() {
        assert!(matches!(kendall_tau_b(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::ConstantVector)));
        assert!(matches!(kendall_tau_b(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]), Err(Error::ConstantVector)));
    }

    #[test]
    fn reversal_is_minus_one() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [4.0, 3.0, 2.0, 1.0];
        assert_eq!(kendall_tau_b(&a, &b).unwrap().tau, -1.0);
    }

    #[test]
    fn five_number_constant() {
        let f = five_number(&[2.0; 7]).unwrap();
        assert!(f.min == 2.0 && f.q1 == 2.0 && f.median == 2.0 && f.q3 == 2.0 && f.max == 2.0);
        assert!(f.outliers.is_empty());
    }

    #[test]
    fn five_number_outlier() {
        let f = five_number(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!(f.median, 3.0);
        assert_eq!(f.outliers, vec![100.0]);
        assert_eq!(f.upper_whisker, 4.0);
    }
}
