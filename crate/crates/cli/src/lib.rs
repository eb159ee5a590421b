//! Batch front end: configuration, ingestion, the analysis pipeline and the
//! simulation runner behind the `ordsub` binary.

pub mod config;
pub mod error;
pub mod generate;
pub mod ingest;
pub mod pipeline;
pub mod provenance;
pub mod render;
pub mod simulate;

use config::RunConfig;
use error::CliError;
use pipeline::Mode;
use provenance::Provenance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Markdown,
}

/// Rendered report plus the exit code it implies.
#[derive(Debug, Clone)]
pub struct Output {
    pub body: String,
    pub exit_code: i32,
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

/// Runs `mode` on an already-parsed config. `config_text` is hashed into the provenance block.
pub fn execute(mode: Mode, config: &RunConfig, config_text: &str, format: Format) -> Result<Output, CliError> {
    let (data, ingest) = ingest::ingest_path(config)?;
    let provenance = Provenance::new(mode, config_text, config.seed);
    let levels = &config.treatment.levels;
    match mode {
        Mode::Analyze | Mode::Audit => {
            let report = pipeline::run(config, &data, ingest, provenance)?;
            let body = match format {
                Format::Json => to_json(&report),
                Format::Markdown => render::run_report(&report, &data, levels),
            };
            Ok(Output { body, exit_code: report.exit_code() })
        }
        Mode::Simulate => {
            let report = simulate::run(config, &data, ingest, provenance)?;
            let body = match format {
                Format::Json => to_json(&report),
                Format::Markdown => render::simulation_report(&report, levels),
            };
            Ok(Output { body, exit_code: error::EXIT_OK })
        }
    }
}
