//! Rectangular unit-level data: covariates, ordinal treatment, outcome.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Measurement type of a covariate column. All kinds are stored as `f64`;
/// ordinal columns hold integer codes and binary columns hold 0/1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Ordinal,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Column { name: name.into(), kind }
    }

    pub fn numeric(name: impl Into<String>) -> Self {
        Self::new(name, ColumnKind::Numeric)
    }
}

/// A table of units with `p` covariates, a treatment level and an outcome.
///
/// Treatment levels are zero-based indices `0..levels`; reports print them
/// one-based. Covariates are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    ids: Vec<u64>,
    columns: Vec<Column>,
    x: Vec<f64>,
    t: Vec<usize>,
    y: Vec<f64>,
    levels: usize,
}

impl Dataset {
    /// Builds a dataset from row-major covariates.
    pub fn new(
        ids: Vec<u64>,
        columns: Vec<Column>,
        x: Vec<f64>,
        t: Vec<usize>,
        y: Vec<f64>,
        levels: usize,
    ) -> Result<Self> {
        let n = ids.len();
        let p = columns.len();
        if levels < 2 {
            return Err(Error::invalid("at least two treatment levels are required"));
        }
        if x.len() != n * p {
            return Err(Error::DimensionMismatch { expected: n * p, got: x.len() });
        }
        if t.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: t.len() });
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: y.len() });
        }
        if let Some(bad) = t.iter().find(|&&l| l >= levels) {
            return Err(Error::invalid(format!("treatment level {bad} outside 0..{levels}")));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("covariates and outcomes must be finite"));
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("unit ids must be unique"));
        }
        Ok(Dataset { ids, columns, x, t, y, levels })
    }

    /// Builds a dataset from per-row covariate vectors, numbering units `0..n`.
    pub fn from_rows(
        columns: Vec<Column>,
        rows: &[Vec<f64>],
        t: Vec<usize>,
        y: Vec<f64>,
        levels: usize,
    ) -> Result<Self> {
        let p = columns.len();
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch { expected: p, got: r.len() });
        }
        let x = rows.iter().flatten().copied().collect();
        let ids = (0..rows.len() as u64).collect();
        Self::new(ids, columns, x, t, y, levels)
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    /// Number of treatment levels `Z`.
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn treatment(&self) -> &[usize] {
        &self.t
    }

    pub fn outcome(&self) -> &[f64] {
        &self.y
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.x[i * p..(i + 1) * p]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.p() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.value(i, j)).collect()
    }

    /// Covariate values of unit `i` restricted to `cols`.
    pub fn select(&self, i: usize, cols: &[usize]) -> Vec<f64> {
        cols.iter().map(|&j| self.value(i, j)).collect()
    }

    /// `n × cols.len()` matrix of the selected covariates.
    pub fn matrix(&self, cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.n(), cols.len(), |i, c| self.value(i, cols[c]))
    }

    pub fn level_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.levels];
        for &l in &self.t {
            counts[l] += 1;
        }
        counts
    }

    pub fn check_columns(&self, cols: &[usize]) -> Result<()> {
        match cols.iter().find(|&&j| j >= self.p()) {
            Some(&j) => Err(Error::invalid(format!("covariate column {j} out of range (p = {})", self.p()))),
            None => Ok(()),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let p = self.p();
        let mut x = Vec::with_capacity(indices.len() * p);
        for &i in indices {
            x.extend_from_slice(self.row(i));
        }
        Dataset {
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
            columns: self.columns.clone(),
            x,
            t: indices.iter().map(|&i| self.t[i]).collect(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            levels: self.levels,
        }
    }

    /// Bootstrap-style resample: rows may repeat, so ids are renumbered `0..n`.
    pub fn resample(&self, indices: &[usize]) -> Dataset {
        let mut out = self.subset(indices);
        out.ids = (0..indices.len() as u64).collect();
        out
    }

    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Dataset> {
        if y.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: y.len() });
        }
        let mut out = self.clone();
        out.y = y;
        Ok(out)
    }

    pub fn with_treatment(&self, t: Vec<usize>) -> Result<Dataset> {
        if t.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: t.len() });
        }
        if t.iter().any(|&l| l >= self.levels) {
            return Err(Error::invalid("treatment level out of range"));
        }
        let mut out = self.clone();
        out.t = t;
        Ok(out)
    }

    /// Same units with rows duplicated `times` times (ids renumbered).
    pub fn repeated(&self, times: usize) -> Dataset {
        let idx: Vec<usize> = (0..times).flat_map(|_| 0..self.n()).collect();
        self.resample(&idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        Dataset::from_rows(
            vec![Column::numeric("a"), Column::new("b", ColumnKind::Binary)],
            &[vec![1.0, 0.0], vec![2.0, 1.0], vec![3.0, 1.0]],
            vec![0, 1, 1],
            vec![10.0, 20.0, 30.0],
            2,
        )
        .unwrap()
    }

    #[test]
    fn accessors() {
        let d = tiny();
        assert_eq!(d.n(), 3);
        assert_eq!(d.p(), 2);
        assert_eq!(d.row(1), &[2.0, 1.0]);
        assert_eq!(d.column(0), vec![1.0, 2.0, 3.0]);
        assert_eq!(d.level_counts(), vec![1, 2]);
        assert_eq!(d.column_index("b"), Some(1));
    }

    #[test]
    fn subset_keeps_ids() {
        let d = tiny().subset(&[2, 0]);
        assert_eq!(d.ids(), &[2, 0]);
        assert_eq!(d.outcome(), &[30.0, 10.0]);
    }

    #[test]
    fn rejects_bad_level_and_ragged_rows() {
        let err = Dataset::from_rows(vec![Column::numeric("a")], &[vec![1.0]], vec![3], vec![0.0], 3);
        assert!(err.is_err());
        let err = Dataset::from_rows(vec![Column::numeric("a")], &[vec![1.0, 2.0]], vec![0], vec![0.0], 2);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn rejects_duplicate_ids() {
        let err = Dataset::new(vec![1, 1], vec![], vec![], vec![0, 1], vec![0.0, 1.0], 2);
        assert!(err.is_err());
    }
}
