use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::pipeline::Mode;

/// Identifies the inputs a report was produced from. Contains no clock or
/// host information, so identical inputs give identical reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub mode: Mode,
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(mode: Mode, config_text: &str, seed: u64) -> Self {
        let digest = Sha256::digest(config_text.as_bytes());
        Provenance {
            tool: "ordsub",
            version: env!("CARGO_PKG_VERSION"),
            core_version: ordsub::VERSION,
            mode,
            config_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            seed,
        }
    }
}
