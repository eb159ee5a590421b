use thiserror::Error;

/// Pipeline stage an error surfaced in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    GpsFit,
    Trim,
    Subclassify,
    Balance,
    Estimation,
    Simulation,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::GpsFit => "gps-fit",
            Stage::Trim => "trim",
            Stage::Subclassify => "subclassify",
            Stage::Balance => "balance",
            Stage::Estimation => "estimation",
            Stage::Simulation => "simulation",
        })
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("unparseable value {value:?} in column `{column}` at data row {row}")]
    UnparseableValue { row: usize, column: String, value: String },
    #[error("no rows left after dropping {dropped} rows with missing values")]
    EmptyAfterFiltering { dropped: usize },
    #[error("[{stage}] {source}")]
    Model {
        stage: Stage,
        #[source]
        source: ordsub::Error,
    },
}

impl CliError {
    pub fn at(stage: Stage) -> impl Fn(ordsub::Error) -> CliError + Copy {
        move |source| CliError::Model { stage, source }
    }

    /// Process exit code: 3 for fits that did not converge or separated, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model {
                source: ordsub::Error::NonConvergence { .. } | ordsub::Error::SeparationDetected { .. },
                ..
            } => 3,
            _ => 2,
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_GATE_STOP: i32 = 4;
