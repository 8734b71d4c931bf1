//! Spectral-Galerkin simulation of kick-forced 2D Navier-Stokes on the strip
//! `[0, L) x (0, 1)` with free-slip walls, plus the tangent, control and
//! mixing diagnostics built on top of it.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the aliases below fix
//! `f64`.

pub mod basis;
pub mod blmetric;
pub mod collocation;
pub mod dynamics;
pub mod ergodicity;
pub mod error;
pub mod io;
pub mod linearization;
pub mod noise;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod stabilisation;

pub use basis::{
    bracket, norms, poincare_constant, stokes_eigenvalue, DomainSpec, ModeIndex, Norms,
    SpectralField, StokesBasis,
};
pub use collocation::{Collocation, GridSize};
pub use dynamics::{
    energy_identity_residual, relative_energy_residual, Dealias, Solver, SolverConfig, Trajectory,
};
pub use ergodicity::{
    dual_lipschitz_lower, ensemble_step, initial_compact, krylov_average, markov_run, mixing_fit,
    monte_carlo_floor, tail_energy, Absorbing, EmpiricalEnsemble, KickSource, MixingFit,
    TestDictionary,
};
pub use error::{Error, Result};
pub use linearization::{
    assemble_gram, bilinear_q, compactness_diagnostic, forcing_derivative_apply, gram_limit_check,
    psi_split, tangent_apply, TangentOperators,
};
pub use noise::{
    eval_kick, project_pm, project_qm, sample_kick, support_bound, KickPath, NoiseLayout,
    NoiseSpec, XiSampler,
};
pub use scalar::Real;
pub use stabilisation::{
    couple, epsilon_check, phi, right_inverse_apply, tune, ControlConfig, CouplingReport,
    CouplingSetup,
};

pub type Domain = DomainSpec<f64>;
pub type Field = SpectralField<f64>;
pub type Basis = StokesBasis<f64>;
pub type Kick = KickPath<f64>;
pub type Noise = NoiseSpec<f64>;
pub type Layout = NoiseLayout<f64>;
pub type Config = SolverConfig<f64>;
pub type Integrator = Solver<f64>;
pub type Path = Trajectory<f64>;
pub type Tangents = TangentOperators<f64>;
pub type Control = ControlConfig<f64>;
pub type Ensemble = EmpiricalEnsemble<f64>;
pub type Dictionary = TestDictionary<f64>;
