use std::path::PathBuf;

use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] kickflow::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use kickflow::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::Diverged { .. }) => 3,
            CliError::Core(E::TuningFailed { .. }) => 4,
            CliError::Core(E::SqueezingViolated { .. }) => 5,
            CliError::Core(E::InsufficientData { .. }) => 6,
            _ => 1,
        }
    }

    fn kind(&self) -> &'static str {
        use kickflow::Error as E;
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Core(e) => match e {
                E::Diverged { .. } => "diverged",
                E::TuningFailed { .. } => "tuning_failed",
                E::SqueezingViolated { .. } => "squeezing_violated",
                E::InsufficientData { .. } => "insufficient_data",
                E::VersionMismatch { .. } => "version_mismatch",
                E::Checksum { .. } => "checksum",
                E::Format(_) => "format",
                E::DimensionMismatch { .. } => "dimension_mismatch",
                E::NumericDomain(_) => "numeric_domain",
                E::InvalidState(_) => "invalid_state",
                E::InvalidArgument(_) => "invalid_argument",
                E::Io(_) => "io",
            },
        }
    }

    /// Machine-readable record printed on failure.
    pub fn record(&self) -> serde_json::Value {
        use kickflow::Error as E;
        let mut rec = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        let extra = match self {
            CliError::Core(E::Diverged { substep, norm }) => {
                json!({ "substep": substep, "norm": norm })
            }
            CliError::Core(E::TuningFailed { best_eps }) => json!({ "best_eps": best_eps }),
            CliError::Core(E::SqueezingViolated { step, qhat }) => {
                json!({ "step": step, "qhat": qhat })
            }
            CliError::Core(E::InsufficientData { usable, required }) => {
                json!({ "usable": usable, "required": required })
            }
            CliError::Io { path, .. } => json!({ "path": path }),
            _ => json!({}),
        };
        if let (Some(r), Some(e)) = (rec.as_object_mut(), extra.as_object()) {
            r.extend(e.clone());
        }
        rec
    }
}
