use crate::data::Dataset;
use crate::error::{Error, Result};

/// Column centering and scaling used while optimizing.
#[derive(Debug, Clone)]
pub(crate) struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &Dataset, cols: &[usize]) -> Result<Self> {
        let n = data.n() as f64;
        let mut mean = Vec::with_capacity(cols.len());
        let mut scale = Vec::with_capacity(cols.len());
        for &j in cols {
            let col = data.column(j);
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0).max(1.0);
            let sd = var.sqrt();
            if sd.is_nan() || sd <= 1e-12 * (1.0 + m.abs()) {
                return Err(Error::RankDeficientDesign(format!(
                    "covariate column {j} is constant"
                )));
            }
            mean.push(m);
            scale.push(sd);
        }
        Ok(Standardizer { mean, scale })
    }

    /// Row-major standardized covariates of the selected columns.
    pub fn transform(&self, data: &Dataset, cols: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(data.n() * cols.len());
        for i in 0..data.n() {
            for (c, &j) in cols.iter().enumerate() {
                out.push((data.value(i, j) - self.mean[c]) / self.scale[c]);
            }
        }
        out
    }

    pub fn identity(p: usize) -> Self {
        Standardizer { mean: vec![0.0; p], scale: vec![1.0; p] }
    }
}

/// Raw (unstandardized) row-major covariates.
pub(crate) fn raw_rows(data: &Dataset, cols: &[usize]) -> Vec<f64> {
    Standardizer::identity(cols.len()).transform(data, cols)
}
