pub mod couple;
pub mod linearize;
pub mod mix;
pub mod noise_check;
pub mod simulate;
pub mod spectrum;

use std::path::Path;

use kickflow::{initial_compact, Basis, Error, Field};

use crate::error::{CliError, CliResult};

/// How a command ended when it did not fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Completed,
    /// Stopped early after writing a checkpoint.
    Checkpointed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Completed => "completed",
            Status::Checkpointed => "checkpointed",
        }
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// `zero`, `random:<seed>` or the path of a field file.
pub fn initial_state(spec: &str, basis: &Basis) -> CliResult<Field> {
    if spec == "zero" {
        return Ok(basis.zeros());
    }
    if let Some(seed) = spec.strip_prefix("random:") {
        let seed: u64 = seed
            .parse()
            .map_err(|_| CliError::config(format!("bad initial state {spec:?}")))?;
        let modes = basis.dim().min(8);
        let mut v = initial_compact(basis.dim(), modes, 1.0, 1, seed)?;
        return Ok(v.remove(0));
    }
    let u: Field = kickflow::io::read_field(&read_text(Path::new(spec))?)?;
    Error::check_dim(basis.dim(), u.len())?;
    Ok(u)
}
