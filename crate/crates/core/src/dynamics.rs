//! Exponential-Euler integration of the Galerkin system over one kick.
//!
//! One substep reads
//! `c+ = e^{-(nu alpha + a) dt} c + (1 - e^{-(nu alpha + a) dt}) / (nu alpha + a) (f - B(c))`
//! with the forcing `f` sampled at the substep midpoint.

use crate::basis::{SpectralField, StokesBasis};
use crate::collocation::{Collocation, GridSize, Workspace};
use crate::error::{Error, Result};
use crate::noise::{time_basis, KickPath};
use crate::scalar::Real;

/// Dealiasing rule for the collocation grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Dealias {
    /// Smallest grid on which all products of resolved modes are exact.
    #[default]
    TwoThirds,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig<T> {
    /// Substep; must divide 1.
    pub dt: T,
    pub dealias: Dealias,
    /// Keep every substep state (needed for linearisation).
    pub record_substeps: bool,
    /// Overrides the minimal dealiased grid when set.
    pub grid: Option<GridSize>,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        SolverConfig {
            dt: T::lit(1e-3),
            dealias: Dealias::TwoThirds,
            record_substeps: false,
            grid: None,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn with_dt(dt: T) -> Self {
        SolverConfig {
            dt,
            ..Self::default()
        }
    }

    pub fn recording(mut self, on: bool) -> Self {
        self.record_substeps = on;
        self
    }

    /// Number of substeps per unit time.
    pub fn steps(&self) -> Result<usize> {
        let dt = self.dt.to_f64_lossy();
        if !(dt.is_finite() && dt > 0.0 && dt <= 1.0) {
            return Err(Error::invalid(format!("dt must lie in (0, 1], got {dt}")));
        }
        let n = (1.0 / dt).round();
        let tol = 1e-9f64.max(8.0 * T::machine_epsilon());
        if (n * dt - 1.0).abs() > tol {
            return Err(Error::invalid(format!("dt = {dt} does not divide 1")));
        }
        Ok(n as usize)
    }
}

/// Per-substep energy bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyRecord<T> {
    pub t: T,
    /// `||u||^2`.
    pub energy: T,
    /// `[u]^2`.
    pub bracket: T,
    /// `<eta(t), u>`.
    pub work: T,
}

/// States of one kick interval.
#[derive(Clone, Debug)]
pub struct Trajectory<T: Real> {
    /// All substep states when recorded, otherwise `[u(0), u(1)]`.
    pub states: Vec<SpectralField<T>>,
    pub kick: KickPath<T>,
    pub energy_log: Vec<EnergyRecord<T>>,
    pub recorded: bool,
    pub dt: T,
}

impl<T: Real> Trajectory<T> {
    pub fn initial(&self) -> &SpectralField<T> {
        &self.states[0]
    }

    pub fn endpoint(&self) -> &SpectralField<T> {
        self.states
            .last()
            .expect("trajectory has at least one state")
    }

    pub fn steps(&self) -> usize {
        self.energy_log.len().saturating_sub(1)
    }
}

/// Integrator for one basis and configuration.
#[derive(Clone, Debug)]
pub struct Solver<T: Real> {
    basis: StokesBasis<T>,
    colloc: Collocation<T>,
    cfg: SolverConfig<T>,
    steps: usize,
    decay: Vec<T>,
    gain: Vec<T>,
}

impl<T: Real> Solver<T> {
    pub fn new(basis: StokesBasis<T>, cfg: SolverConfig<T>) -> Result<Self> {
        let steps = cfg.steps()?;
        let spec = basis.spec();
        let grid = cfg
            .grid
            .unwrap_or_else(|| GridSize::dealiased(spec.mx, spec.ny));
        let colloc = Collocation::new(&basis, grid)?;
        let dt = T::one() / T::from_count(steps);
        let (decay, gain) = exponential_factors(&basis, dt);
        Ok(Solver {
            basis,
            colloc,
            cfg,
            steps,
            decay,
            gain,
        })
    }

    pub fn basis(&self) -> &StokesBasis<T> {
        &self.basis
    }

    pub fn collocation(&self) -> &Collocation<T> {
        &self.colloc
    }

    pub fn config(&self) -> &SolverConfig<T> {
        &self.cfg
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> T {
        T::one() / T::from_count(self.steps)
    }

    /// Substep decay factors `e^{-(nu alpha_k + a) dt}`.
    pub fn decay(&self) -> &[T] {
        &self.decay
    }

    /// Substep forcing gains `(1 - e^{-(nu alpha_k + a) dt}) / (nu alpha_k + a)`.
    pub fn gain(&self) -> &[T] {
        &self.gain
    }

    /// Copy of this solver with recording switched on or off.
    pub fn recording(&self, on: bool) -> Self {
        let mut s = self.clone();
        s.cfg.record_substeps = on;
        s
    }

    /// One exponential-Euler substep with forcing value `f`.
    pub fn step(&self, u: &SpectralField<T>, f: &SpectralField<T>) -> Result<SpectralField<T>> {
        Error::check_dim(self.basis.dim(), u.len())?;
        Error::check_dim(self.basis.dim(), f.len())?;
        if !u.is_finite() || !f.is_finite() {
            return Err(Error::NumericDomain("non-finite step input".into()));
        }
        let mut ws = self.colloc.workspace();
        let mut nl = vec![T::zero(); u.len()];
        let mut out = u.clone();
        self.advance(out.as_mut_slice(), f.as_slice(), &mut ws, &mut nl);
        if !out.is_finite() {
            return Err(Error::Diverged {
                substep: 0,
                norm: f64::INFINITY,
            });
        }
        Ok(out)
    }

    fn advance(&self, u: &mut [T], f: &[T], ws: &mut Workspace<T>, nl: &mut [T]) {
        self.colloc.nonlinearity_into(u, ws, nl);
        for k in 0..u.len() {
            u[k] = self.decay[k] * u[k] + self.gain[k] * (f[k] - nl[k]);
        }
    }

    fn check_kick(&self, eta: &KickPath<T>) -> Result<()> {
        Error::check_dim(self.basis.dim(), eta.space_modes())?;
        if eta.time_modes() == 0 || !eta.is_finite() {
            return Err(Error::invalid(
                "kick must have finite coefficients and P >= 1",
            ));
        }
        Ok(())
    }

    /// Norm above which a run is declared divergent.
    pub fn divergence_threshold(&self, u0: &SpectralField<T>, eta: &KickPath<T>) -> T {
        let rate = self.basis.spec().viscosity * self.basis.lambda1();
        let kappa = (-rate).exp();
        let nu = self.basis.spec().viscosity;
        let m2 = eta.v_dual_norm_squared(&self.basis) / (nu * nu * self.basis.lambda1());
        let radius = (u0.norm_squared() + m2 / (T::one() - kappa)).sqrt();
        T::lit(1e6) * radius
    }

    /// Forcing values at substep midpoints.
    fn midpoint_forcing(&self, eta: &KickPath<T>) -> Vec<Vec<T>> {
        let dt = self.dt();
        let half = T::lit(0.5);
        (0..self.steps)
            .map(|n| {
                let t = (T::from_count(n) + half) * dt;
                let tau = time_basis(eta.time_modes(), t);
                let mut f = vec![T::zero(); eta.space_modes()];
                eta.eval_with(&tau, &mut f);
                f
            })
            .collect()
    }

    fn work_at(&self, eta: &KickPath<T>, t: T, u: &[T], buf: &mut [T]) -> T {
        let tau = time_basis(eta.time_modes(), t);
        eta.eval_with(&tau, buf);
        buf.iter()
            .zip(u)
            .fold(T::zero(), |acc, (a, b)| acc + *a * *b)
    }

    fn record(&self, eta: &KickPath<T>, n: usize, u: &[T], buf: &mut [T]) -> EnergyRecord<T> {
        let t = T::from_count(n) * self.dt();
        EnergyRecord {
            t,
            energy: u.iter().fold(T::zero(), |acc, c| acc + *c * *c),
            bracket: self.basis.bracket_unchecked(u, u),
            work: self.work_at(eta, t, u, buf),
        }
    }

    /// Integrates over `[0, 1]` and logs the energy balance at every substep.
    pub fn flow(&self, u0: &SpectralField<T>, eta: &KickPath<T>) -> Result<Trajectory<T>> {
        self.integrate(u0, eta, true)
    }

    /// Endpoint `S(u0, eta)` of the flow.
    pub fn time_one_map(
        &self,
        u0: &SpectralField<T>,
        eta: &KickPath<T>,
    ) -> Result<SpectralField<T>> {
        let traj = self.recording(false).integrate(u0, eta, false)?;
        Ok(traj.states.into_iter().last().expect("endpoint"))
    }

    fn integrate(
        &self,
        u0: &SpectralField<T>,
        eta: &KickPath<T>,
        log: bool,
    ) -> Result<Trajectory<T>> {
        Error::check_dim(self.basis.dim(), u0.len())?;
        if !u0.is_finite() {
            return Err(Error::NumericDomain("non-finite initial state".into()));
        }
        self.check_kick(eta)?;
        let k = self.basis.dim();
        let limit = self.divergence_threshold(u0, eta);
        let limit_sq = limit * limit;
        let forcing = self.midpoint_forcing(eta);
        let mut ws = self.colloc.workspace();
        let mut nl = vec![T::zero(); k];
        let mut buf = vec![T::zero(); k];
        let mut u = u0.clone();
        let mut states = Vec::with_capacity(if self.cfg.record_substeps {
            self.steps + 1
        } else {
            2
        });
        states.push(u0.clone());
        let mut energy_log = Vec::with_capacity(if log { self.steps + 1 } else { 0 });
        if log {
            energy_log.push(self.record(eta, 0, u.as_slice(), &mut buf));
        }
        for (n, f) in forcing.iter().enumerate() {
            self.advance(u.as_mut_slice(), f, &mut ws, &mut nl);
            let e = u.norm_squared();
            if !(e.is_finite() && e <= limit_sq) {
                return Err(Error::Diverged {
                    substep: n + 1,
                    norm: e.sqrt().to_f64_lossy(),
                });
            }
            if log {
                energy_log.push(self.record(eta, n + 1, u.as_slice(), &mut buf));
            }
            if self.cfg.record_substeps && n + 1 < self.steps {
                states.push(u.clone());
            }
        }
        states.push(u);
        Ok(Trajectory {
            states,
            kick: eta.clone(),
            energy_log,
            recorded: self.cfg.record_substeps,
            dt: self.dt(),
        })
    }

    /// Chains `kicks.len()` time-one maps and returns the states at integer times.
    pub fn chain(
        &self,
        u0: &SpectralField<T>,
        kicks: &[KickPath<T>],
    ) -> Result<Vec<SpectralField<T>>> {
        let mut out = Vec::with_capacity(kicks.len() + 1);
        out.push(u0.clone());
        for eta in kicks {
            let next = self.time_one_map(out.last().expect("nonempty"), eta)?;
            out.push(next);
        }
        Ok(out)
    }

    /// Maximal defect of the exponentially weighted energy equality over the
    /// logged substeps. The damping term enters as `nu [u]^2 + a ||u||^2`.
    pub fn energy_identity_residual(&self, traj: &Trajectory<T>) -> Result<T> {
        energy_identity_residual(traj, &self.basis)
    }
}

fn exponential_factors<T: Real>(basis: &StokesBasis<T>, dt: T) -> (Vec<T>, Vec<T>) {
    let spec = basis.spec();
    let mut decay = Vec::with_capacity(basis.dim());
    let mut gain = Vec::with_capacity(basis.dim());
    for &alpha in basis.eigenvalues() {
        let rate = spec.viscosity * alpha + spec.damping;
        let x = -rate * dt;
        decay.push(x.exp());
        // (1 - e^{-r dt}) / r without cancellation.
        gain.push(-x.exp_m1() / rate);
    }
    (decay, gain)
}

/// See [`Solver::energy_identity_residual`].
pub fn energy_identity_residual<T: Real>(
    traj: &Trajectory<T>,
    basis: &StokesBasis<T>,
) -> Result<T> {
    let log = &traj.energy_log;
    if log.is_empty() {
        return Err(Error::InvalidState("trajectory has no energy log".into()));
    }
    let spec = basis.spec();
    let rate = spec.viscosity * basis.lambda1();
    let g = |r: &EnergyRecord<T>| r.work - spec.viscosity * r.bracket - spec.damping * r.energy;
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let e0 = log[0].energy;
    let mut integral = T::zero();
    let mut worst = T::zero();
    for w in log.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let h = b.t - a.t;
        let shrink = (-rate * h).exp();
        integral = shrink * integral + half * h * (shrink * g(a) + g(b));
        let predicted = (-rate * b.t).exp() * e0 + two * integral;
        let defect = (b.energy - predicted).abs();
        if defect > worst {
            worst = defect;
        }
    }
    Ok(worst)
}

/// Residual of [`energy_identity_residual`] divided by `max_t ||u(t)||^2`.
pub fn relative_energy_residual<T: Real>(
    traj: &Trajectory<T>,
    basis: &StokesBasis<T>,
) -> Result<T> {
    let abs = energy_identity_residual(traj, basis)?;
    let peak = traj
        .energy_log
        .iter()
        .fold(T::zero(), |m, r| if r.energy > m { r.energy } else { m });
    Ok(if peak > T::zero() { abs / peak } else { abs })
}
