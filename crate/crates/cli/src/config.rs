//! Strict TOML experiment configuration.

use std::path::{Path, PathBuf};

use kickflow::{Basis, Config, Control, Domain, Layout, Noise};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; must match the subcommand when present.
    #[serde(default)]
    pub experiment: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub domain: DomainSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub control: ControlSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub couple: CoupleSection,
    #[serde(default)]
    pub mix: MixSection,
    #[serde(default)]
    pub noise_check: NoiseCheckSection,
}

fn default_seed() -> u64 {
    42
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: None,
            seed: default_seed(),
            out_dir: default_out(),
            domain: DomainSection::default(),
            solver: SolverSection::default(),
            noise: NoiseSection::default(),
            control: ControlSection::default(),
            simulate: SimulateSection::default(),
            couple: CoupleSection::default(),
            mix: MixSection::default(),
            noise_check: NoiseCheckSection::default(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DomainSection {
    pub length: f64,
    pub viscosity: f64,
    pub damping: f64,
    pub mx: usize,
    pub ny: usize,
}

impl Default for DomainSection {
    fn default() -> Self {
        DomainSection {
            length: 4.0,
            viscosity: 0.1,
            damping: 0.0,
            mx: 5,
            ny: 5,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub dt: f64,
    pub dealias: String,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            dt: 1e-3,
            dealias: "two-thirds".into(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "B0")]
    pub b0: f64,
    pub s_t: f64,
    pub s_x: f64,
    /// Kick seed; falls back to the top-level seed.
    pub seed: Option<u64>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            p: 2,
            b0: 1.0,
            s_t: 2.0,
            s_x: 1.0,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSection {
    /// Fixed rank; tuned when absent.
    #[serde(rename = "M")]
    pub m: Option<usize>,
    /// Fixed Tikhonov parameter; tuned when absent.
    pub gamma: Option<f64>,
    pub delta: f64,
    pub q_target: f64,
    pub epsilon_target: f64,
}

impl Default for ControlSection {
    fn default() -> Self {
        ControlSection {
            m: None,
            gamma: None,
            delta: 1e-2,
            q_target: 0.95,
            epsilon_target: 0.1,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub kicks: usize,
    pub u0: String,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            kicks: 10,
            u0: "zero".into(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CoupleSection {
    pub steps: usize,
    pub pairs: usize,
    /// Kicks from rest before coupling starts.
    pub warmup: usize,
}

impl Default for CoupleSection {
    fn default() -> Self {
        CoupleSection {
            steps: 50,
            pairs: 1,
            warmup: 10,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MixSection {
    pub particles: usize,
    pub kicks: usize,
    /// Two comma-separated compacts, each `unit`, `r3` or a matrix file.
    pub compact: String,
    pub compact_modes: usize,
    pub dictionary_leading: usize,
    pub dictionary_random: usize,
    pub clamp_radius: f64,
    /// Defaults to the median retained eigenvalue.
    pub tail_cutoff: Option<f64>,
    /// Snapshots in the time-averaged stationary estimate.
    pub stationary_window: usize,
    pub checkpoint_every: usize,
}

impl Default for MixSection {
    fn default() -> Self {
        MixSection {
            particles: 512,
            kicks: 100,
            compact: "unit,r3".into(),
            compact_modes: 8,
            dictionary_leading: 8,
            dictionary_random: 16,
            clamp_radius: 1.0,
            tail_cutoff: None,
            stationary_window: 10,
            checkpoint_every: 0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseCheckSection {
    pub draws: usize,
    pub independence_draws: usize,
    #[serde(rename = "M")]
    pub m: usize,
}

impl Default for NoiseCheckSection {
    fn default() -> Self {
        NoiseCheckSection {
            draws: 1_000_000,
            independence_draws: 100_000,
            m: 4,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    /// Seed of the kick streams.
    pub fn kick_seed(&self) -> u64 {
        self.noise.seed.unwrap_or(self.seed)
    }

    pub fn basis(&self) -> CliResult<Basis> {
        let d = &self.domain;
        Domain::new(d.length, d.viscosity, d.damping, d.mx, d.ny)
            .and_then(Basis::new)
            .map_err(|e| CliError::config(format!("[domain] {e}")))
    }

    pub fn solver_config(&self) -> CliResult<Config> {
        if self.solver.dealias != "two-thirds" {
            return Err(CliError::config(format!(
                "[solver] unknown dealias rule {:?}; only \"two-thirds\" is supported",
                self.solver.dealias
            )));
        }
        let cfg = Config::with_dt(self.solver.dt);
        cfg.steps()
            .map_err(|e| CliError::config(format!("[solver] {e}")))?;
        Ok(cfg)
    }

    pub fn solver(&self) -> CliResult<kickflow::Integrator> {
        kickflow::Solver::new(self.basis()?, self.solver_config()?)
            .map_err(|e| CliError::config(format!("[solver] {e}")))
    }

    pub fn noise_spec(&self) -> Noise {
        Noise {
            time_modes: self.noise.p,
            b0: self.noise.b0,
            s_t: self.noise.s_t,
            s_x: self.noise.s_x,
        }
    }

    pub fn layout(&self, basis: &Basis) -> CliResult<Layout> {
        Layout::new(&self.noise_spec(), basis).map_err(|e| CliError::config(format!("[noise] {e}")))
    }

    /// Control template; `m` and `gamma` are placeholders when tuning.
    pub fn control_template(&self, noise_dim: usize) -> CliResult<Control> {
        let c = &self.control;
        let ctl = Control::new(
            c.m.unwrap_or(noise_dim),
            c.gamma.unwrap_or(0.1),
            c.delta,
            c.q_target,
        );
        ctl.validate(noise_dim)
            .map_err(|e| CliError::config(format!("[control] {e}")))?;
        if !(c.epsilon_target >= 0.0) {
            return Err(CliError::config(
                "[control] epsilon_target must be nonnegative",
            ));
        }
        Ok(ctl)
    }

    /// Checks every section that does not depend on the subcommand.
    pub fn validate(&self, command: &str) -> CliResult<()> {
        if let Some(e) = &self.experiment {
            if e != command {
                return Err(CliError::config(format!(
                    "config is for experiment {e:?} but subcommand is {command:?}"
                )));
            }
        }
        let basis = self.basis()?;
        self.solver_config()?;
        let layout = self.layout(&basis)?;
        self.control_template(layout.dim())?;
        let m = &self.mix;
        if m.particles < 2 || m.compact_modes == 0 || m.compact_modes > basis.dim() {
            return Err(CliError::config(
                "[mix] needs at least 2 particles and 1..=K compact modes",
            ));
        }
        if !(m.clamp_radius > 0.0) || m.stationary_window == 0 {
            return Err(CliError::config(
                "[mix] clamp_radius and stationary_window must be positive",
            ));
        }
        if m.tail_cutoff.is_some_and(|c| !(c > 0.0)) {
            return Err(CliError::config("[mix] tail_cutoff must be positive"));
        }
        if self.couple.pairs == 0 {
            return Err(CliError::config("[couple] pairs must be positive"));
        }
        let n = &self.noise_check;
        if n.draws < 2 || n.independence_draws < 2 || n.m == 0 || 2 * n.m > layout.dim() {
            return Err(CliError::config(
                "[noise_check] needs at least 2 draws and 1 <= 2 M <= P K",
            ));
        }
        Ok(())
    }

    /// Stable fingerprint of the configuration.
    pub fn fingerprint(&self) -> String {
        crate::output::sha256_hex(
            serde_json::to_string(self)
                .expect("config serialises")
                .as_bytes(),
        )
    }
}
