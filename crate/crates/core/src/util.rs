use nalgebra::DMatrix;
use serde::ser::{SerializeSeq, Serializer};


/// Logistic CDF.
pub(crate) fn cdf(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Logistic survival function `1 − F(x)`.
pub(crate) fn sf(x: f64) -> f64 {
    cdf(-x)
}

/// Logistic density.
pub(crate) fn pdf(x: f64) -> f64 {
    cdf(x) * sf(x)
}

/// Two-sided standard-normal p-value `2·(1 − Φ(|z|))`.
pub fn two_sided_p(z: f64) -> f64 {
    libm::erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance with `n − 1` denominator; zero for a single observation.
pub(crate) fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

pub(crate) fn serialize_matrix<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for r in 0..m.nrows() {
        let row: Vec<f64> = m.row(r).iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}
