//! Writes the synthetic observational base population as CSV.

use std::io::Write;

use ordsub::synthetic::observational_base;

use crate::error::CliError;

pub const LEVEL_LABELS: [&str; 5] = ["never", "rarely", "sometimes", "often", "always"];

pub fn write_base<W: Write>(out: W, n: usize, seed: u64) -> Result<(), CliError> {
    let data = observational_base(n, seed).map_err(|e| CliError::Config(e.to_string()))?;
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CliError::Io(e.to_string());
    let mut header = vec!["id".to_string()];
    header.extend(data.columns().iter().map(|c| c.name.clone()));
    header.extend(["exposure".to_string(), "y".to_string()]);
    w.write_record(&header).map_err(io)?;
    for i in 0..data.n() {
        let mut rec = vec![data.ids()[i].to_string()];
        rec.extend(data.row(i).iter().map(|v| v.to_string()));
        rec.push(LEVEL_LABELS[data.treatment()[i]].to_string());
        rec.push(data.outcome()[i].to_string());
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

/// A config matching the columns written by [`write_base`].
pub fn base_config(input: &str) -> String {
    format!(
        r#"input = "{input}"
id = "id"
outcome = "y"
seed = 1

[treatment]
column = "exposure"
levels = ["never", "rarely", "sometimes", "often", "always"]

[[covariates]]
name = "age"
role = "a1"
[[covariates]]
name = "prior_bmi"
role = "a1"
[[covariates]]
name = "activity"
[[covariates]]
name = "income"
[[covariates]]
name = "smoker"
kind = "binary"
[[covariates]]
name = "education"
kind = "ordinal"
[[covariates]]
name = "meals_out"
[[covariates]]
name = "female"
kind = "binary"

[design]
k = [5, 10, 15]
elimination = "E2"

[estimation]
adjustment = ["a1", "a2"]
bootstrap = 200

[simulation]
replications = 100
n_covariates = 4
bootstrap = 50
"#
    )
}
