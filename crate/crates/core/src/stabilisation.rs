//! Regularised right inverse of `D_eta S`, the control map `Phi` and the
//! two-trajectory coupling that measures squeezing.

use nalgebra::{DMatrix, DVector};

use crate::basis::SpectralField;
use crate::dynamics::Solver;
use crate::error::{Error, Result};
use crate::linearization::{assemble_gram, operator_norm, regularized_solve, TangentOperators};
use crate::noise::{sample_kick, KickPath, NoiseLayout, XiSampler};
use crate::rng::kick_stream;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct ControlConfig<T> {
    /// Rank of the noise projection `P_M`.
    pub m: usize,
    /// Tikhonov parameter.
    pub gamma: T,
    /// Largest admissible pair distance.
    pub delta: T,
    pub q_target: T,
}

impl<T: Real> ControlConfig<T> {
    pub fn new(m: usize, gamma: T, delta: T, q_target: T) -> Self {
        ControlConfig {
            m,
            gamma,
            delta,
            q_target,
        }
    }

    pub fn validate(&self, noise_dim: usize) -> Result<()> {
        if self.m == 0 || self.m > noise_dim {
            return Err(Error::invalid(format!(
                "M = {} must lie in 1..={noise_dim}",
                self.m
            )));
        }
        if !(self.gamma > T::zero() && self.gamma.is_finite()) {
            return Err(Error::invalid(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.delta > T::zero() && self.delta.is_finite()) {
            return Err(Error::invalid(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if !(self.q_target > T::zero() && self.q_target < T::one()) {
            return Err(Error::invalid(format!(
                "q_target must lie in (0, 1), got {}",
                self.q_target
            )));
        }
        Ok(())
    }
}

/// `R_{M, gamma} = P_M A^T (G + gamma I)^{-1}` as a dense `PK x K` matrix.
#[derive(Clone, Debug)]
pub struct RightInverse<T: Real> {
    pub config: ControlConfig<T>,
    pub matrix: DMatrix<T>,
    time_modes: usize,
    space_modes: usize,
    /// `(lambda_max + gamma) / (lambda_min + gamma)`.
    pub condition: T,
}

impl<T: Real> RightInverse<T> {
    pub fn new(
        ops: &TangentOperators<T>,
        ctl: &ControlConfig<T>,
        layout: &NoiseLayout<T>,
    ) -> Result<Self> {
        check_layout(ops, layout)?;
        ctl.validate(layout.dim())?;
        let k = ops.dim();
        let solved = regularized_inverse(&ops.gram, ctl.gamma)?;
        let mut matrix = ops.a_matrix.transpose() * solved;
        for idx in 0..layout.dim() {
            if layout.rank(idx) >= ctl.m {
                matrix.row_mut(idx).fill(T::zero());
            }
        }
        let lo = ops.min_gram_eigenvalue().max(T::zero());
        let hi = ops.max_gram_eigenvalue().max(T::zero());
        Ok(RightInverse {
            config: ctl.clone(),
            matrix,
            time_modes: layout.time_modes(),
            space_modes: k,
            condition: (hi + ctl.gamma) / (lo + ctl.gamma),
        })
    }

    pub fn apply(&self, f: &SpectralField<T>) -> Result<KickPath<T>> {
        Error::check_dim(self.space_modes, f.len())?;
        let flat = &self.matrix * &f.coeffs;
        KickPath::from_flat(self.time_modes, self.space_modes, flat.as_slice())
    }

    /// `||R||_2`.
    pub fn norm(&self) -> T {
        operator_norm(&self.matrix)
    }

    /// `Phi = -R Psi_2 (u' - u)`.
    pub fn phi(
        &self,
        ops: &TangentOperators<T>,
        u: &SpectralField<T>,
        u_prime: &SpectralField<T>,
    ) -> Result<KickPath<T>> {
        Error::check_dim(self.space_modes, u.len())?;
        Error::check_dim(self.space_modes, u_prime.len())?;
        let g = &u_prime.coeffs - &u.coeffs;
        let flat = -(&self.matrix * (&ops.psi2 * g));
        KickPath::from_flat(self.time_modes, self.space_modes, flat.as_slice())
    }

    /// `(A R - I) Psi_2`.
    pub fn defect_operator(&self, ops: &TangentOperators<T>) -> DMatrix<T> {
        let ar = &ops.a_matrix * &self.matrix;
        &ar * &ops.psi2 - &ops.psi2
    }

    /// `eps_hat = ||(A R - I) Psi_2||_2`.
    pub fn epsilon(&self, ops: &TangentOperators<T>) -> T {
        operator_norm(&self.defect_operator(ops))
    }
}

fn check_layout<T: Real>(ops: &TangentOperators<T>, layout: &NoiseLayout<T>) -> Result<()> {
    Error::check_dim(ops.dim(), layout.space_modes())?;
    Error::check_dim(ops.noise_dim(), layout.dim())
}

fn regularized_inverse<T: Real>(gram: &DMatrix<T>, gamma: T) -> Result<DMatrix<T>> {
    let n = gram.nrows();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = T::one();
        out.set_column(j, &regularized_solve(gram, gamma, &e)?);
    }
    Ok(out)
}

/// `R_{M, gamma} f`.
pub fn right_inverse_apply<T: Real>(
    ops: &TangentOperators<T>,
    f: &SpectralField<T>,
    ctl: &ControlConfig<T>,
    layout: &NoiseLayout<T>,
) -> Result<KickPath<T>> {
    RightInverse::new(ops, ctl, layout)?.apply(f)
}

/// `Phi(u, u', eta) = -R_{M, gamma}(u, eta) Psi_2(u, eta) (u' - u)` with `ops` assembled at `(u, eta)`.
pub fn phi<T: Real>(
    u: &SpectralField<T>,
    u_prime: &SpectralField<T>,
    ops: &TangentOperators<T>,
    ctl: &ControlConfig<T>,
    layout: &NoiseLayout<T>,
) -> Result<KickPath<T>> {
    RightInverse::new(ops, ctl, layout)?.phi(ops, u, u_prime)
}

/// `eps_hat = ||(A R_{M, gamma} - I) Psi_2||_2`.
pub fn epsilon_check<T: Real>(
    ops: &TangentOperators<T>,
    ctl: &ControlConfig<T>,
    layout: &NoiseLayout<T>,
) -> Result<T> {
    Ok(RightInverse::new(ops, ctl, layout)?.epsilon(ops))
}

/// Default Tikhonov grid `1e-1, 1e-2, ..., 1e-8`.
pub fn gamma_grid<T: Real>() -> Vec<T> {
    (1..=8).map(|e| T::lit(10f64.powi(-e))).collect()
}

/// Result of [`tune`].
#[derive(Clone, Debug)]
pub struct Tuning<T: Real> {
    pub config: ControlConfig<T>,
    pub epsilon: T,
    /// Every `(M, gamma, eps_hat)` evaluated, in search order.
    pub trace: Vec<(usize, T, T)>,
}

/// Smallest `M` in `{K, 2K, ..., PK}`, then largest `gamma` on the grid,
/// with `eps_hat <= epsilon_target`. `delta` and `q_target` are copied from
/// `template`.
pub fn tune<T: Real>(
    ops: &TangentOperators<T>,
    layout: &NoiseLayout<T>,
    epsilon_target: T,
    template: &ControlConfig<T>,
) -> Result<Tuning<T>> {
    check_layout(ops, layout)?;
    let k = ops.dim();
    let mut best = T::lit(f64::INFINITY);
    let mut trace = Vec::new();
    for blocks in 1..=layout.time_modes() {
        for gamma in gamma_grid::<T>() {
            let ctl = ControlConfig {
                m: blocks * k,
                gamma,
                ..template.clone()
            };
            let eps = epsilon_check(ops, &ctl, layout)?;
            trace.push((ctl.m, gamma, eps));
            if eps < best {
                best = eps;
            }
            if eps <= epsilon_target {
                return Ok(Tuning {
                    config: ctl,
                    epsilon: eps,
                    trace,
                });
            }
        }
    }
    Err(Error::TuningFailed {
        best_eps: best.to_f64_lossy(),
    })
}

/// One coupling step.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingStep<T> {
    pub k: usize,
    /// `||u_k - u'_k||` before the step.
    pub dist: T,
    /// `||u_{k+1} - u'_{k+1}||`.
    pub next_dist: T,
    pub qhat: T,
    /// `||Phi_k||_E`.
    pub phi_norm: T,
    /// `||R||_2 ||Psi_2||_2` at this step.
    pub phi_bound: T,
    pub eps_hat: T,
    /// `||(A R - I) Psi_2 g|| / ||g||` for the realised `g = u' - u`.
    pub residual: T,
    /// `||r|| / ||g||^2` with `r` the first-order Taylor remainder.
    pub c2_hat: T,
    /// `||Psi_1|| + eps_hat + c2_hat ||g||`.
    pub predicted_q: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CouplingStop {
    Completed,
    /// Distance fell below `1e-14`.
    Converged,
    /// Distance exceeded `delta`.
    SqueezingViolated,
}

#[derive(Clone, Debug)]
pub struct CouplingReport<T> {
    pub steps: Vec<CouplingStep<T>>,
    pub stop: CouplingStop,
    pub q_max: T,
    pub q_geo_mean: T,
    /// `max ||Phi|| / ||u - u'||`.
    pub c_hat: T,
    /// Max of the per-step `c2_hat` over steps with `dist >= 1e-6`; below
    /// that the remainder is dominated by round-off.
    pub c2_hat: T,
    pub eps_max: T,
    pub m: usize,
    pub gamma: T,
}

impl<T: Real> CouplingReport<T> {
    pub fn violated(&self) -> bool {
        self.stop == CouplingStop::SqueezingViolated
    }

    /// Converts a violation into [`Error::SqueezingViolated`].
    pub fn into_result(self) -> Result<Self> {
        if self.violated() {
            let last = self.steps.last();
            return Err(Error::SqueezingViolated {
                step: last.map_or(0, |s| s.k),
                qhat: last.map_or(f64::INFINITY, |s| s.qhat.to_f64_lossy()),
            });
        }
        Ok(self)
    }
}

/// Inputs of [`couple`] that stay fixed across steps.
#[derive(Clone, Copy, Debug)]
pub struct CouplingSetup<'a, T: Real> {
    pub solver: &'a Solver<T>,
    pub layout: &'a NoiseLayout<T>,
    pub sampler: &'a XiSampler,
    pub ctl: &'a ControlConfig<T>,
    pub seed: u64,
    pub lineage: u64,
}

const UNDERFLOW: f64 = 1e-14;
const C2_MIN_DIST: f64 = 1e-6;

/// Drives `u` with `eta_k` and `u'` with `eta_k + Phi_k` for up to `n_steps` kicks.
pub fn couple<T: Real>(
    setup: &CouplingSetup<'_, T>,
    u0: &SpectralField<T>,
    u0_prime: &SpectralField<T>,
    n_steps: usize,
) -> Result<CouplingReport<T>> {
    let solver = setup.solver.recording(true);
    let plain = setup.solver.recording(false);
    let ctl = setup.ctl;
    ctl.validate(setup.layout.dim())?;
    let d0 = (u0 - u0_prime).norm();
    if d0 > ctl.delta {
        return Err(Error::invalid(format!(
            "initial distance {d0} exceeds delta = {}",
            ctl.delta
        )));
    }
    let mut u = u0.clone();
    let mut v = u0_prime.clone();
    let mut steps = Vec::new();
    let mut stop = CouplingStop::Completed;
    for k in 0..n_steps {
        let g = &v - &u;
        let dist = g.norm();
        if dist <= T::lit(UNDERFLOW) {
            stop = CouplingStop::Converged;
            break;
        }
        let eta = sample_kick(
            setup.layout,
            setup.sampler,
            &mut kick_stream(setup.seed, setup.lineage, k as u64),
        );
        let base = solver.flow(&u, &eta)?;
        let ops = assemble_gram(&solver, &base)?;
        let rinv = RightInverse::new(&ops, ctl, setup.layout)?;
        let control = rinv.phi(&ops, &u, &v)?;
        let u_next = base.endpoint().clone();
        let v_next = plain.time_one_map(&v, &(&eta + &control))?;
        let next_dist = (&v_next - &u_next).norm();

        let defect = rinv.defect_operator(&ops);
        let linear = ops.jacobian() * &g.coeffs + &ops.a_matrix * control.to_flat();
        let remainder = (&v_next.coeffs - &u_next.coeffs) - linear;
        let eps_hat = operator_norm(&defect);
        let c2_hat = remainder.norm() / (dist * dist);
        let phi_norm = control.norm();
        steps.push(CouplingStep {
            k,
            dist,
            next_dist,
            qhat: next_dist / dist,
            phi_norm,
            phi_bound: rinv.norm() * operator_norm(&ops.psi2),
            eps_hat,
            residual: (defect * &g.coeffs).norm() / dist,
            c2_hat,
            predicted_q: ops.psi1_norm() + eps_hat + c2_hat * dist,
        });
        u = u_next;
        v = v_next;
        if next_dist > ctl.delta {
            stop = CouplingStop::SqueezingViolated;
            break;
        }
    }
    Ok(summarize(steps, stop, ctl))
}

fn summarize<T: Real>(
    steps: Vec<CouplingStep<T>>,
    stop: CouplingStop,
    ctl: &ControlConfig<T>,
) -> CouplingReport<T> {
    let mut q_max = T::zero();
    let mut log_sum = T::zero();
    let mut c_hat = T::zero();
    let mut c2_hat = T::zero();
    let mut eps_max = T::zero();
    let mut all_positive = true;
    for s in &steps {
        q_max = q_max.max(s.qhat);
        if s.qhat > T::zero() {
            log_sum += s.qhat.ln();
        } else {
            all_positive = false;
        }
        c_hat = c_hat.max(s.phi_norm / s.dist);
        if s.dist >= T::lit(C2_MIN_DIST) {
            c2_hat = c2_hat.max(s.c2_hat);
        }
        eps_max = eps_max.max(s.eps_hat);
    }
    let q_geo_mean = if steps.is_empty() || !all_positive {
        T::zero()
    } else {
        (log_sum / T::from_count(steps.len())).exp()
    };
    CouplingReport {
        steps,
        stop,
        q_max,
        q_geo_mean,
        c_hat,
        c2_hat,
        eps_max,
        m: ctl.m,
        gamma: ctl.gamma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{DomainSpec, StokesBasis};
    use crate::dynamics::SolverConfig;
    use crate::noise::NoiseSpec;

    fn setup() -> (Solver<f64>, NoiseLayout<f64>) {
        let basis = StokesBasis::new(DomainSpec::new(4.0, 0.1, 0.0, 2, 2).unwrap()).unwrap();
        let layout = NoiseLayout::new(&NoiseSpec::default(), &basis).unwrap();
        (
            Solver::new(basis, SolverConfig::with_dt(0.02).recording(true)).unwrap(),
            layout,
        )
    }

    #[test]
    fn control_config_validation() {
        let ok = ControlConfig::new(4, 0.1, 1e-2, 0.9);
        assert!(ok.validate(10).is_ok());
        assert!(ControlConfig { m: 0, ..ok.clone() }.validate(10).is_err());
        assert!(ControlConfig {
            m: 11,
            ..ok.clone()
        }
        .validate(10)
        .is_err());
        assert!(ControlConfig {
            gamma: 0.0,
            ..ok.clone()
        }
        .validate(10)
        .is_err());
        assert!(ControlConfig {
            q_target: 1.0,
            ..ok.clone()
        }
        .validate(10)
        .is_err());
        assert!(ControlConfig { delta: -1.0, ..ok }.validate(10).is_err());
    }

    #[test]
    fn zero_base_needs_no_control() {
        let (s, layout) = setup();
        let k = s.basis().dim();
        let base = s.flow(&s.basis().zeros(), &layout.zeros()).unwrap();
        let ops = assemble_gram(&s, &base).unwrap();
        let ctl = ControlConfig::new(k, 0.1, 1e-2, 0.9);
        assert_eq!(epsilon_check(&ops, &ctl, &layout).unwrap(), 0.0);
        let u = SpectralField::unit(0, k);
        let control = phi(&s.basis().zeros(), &u, &ops, &ctl, &layout).unwrap();
        assert_eq!(control.norm(), 0.0);
        assert_eq!(
            right_inverse_apply(&ops, &s.basis().zeros(), &ctl, &layout)
                .unwrap()
                .norm(),
            0.0
        );
        let t = tune(&ops, &layout, 0.0, &ctl).unwrap();
        assert_eq!((t.config.m, t.config.gamma), (k, 0.1));
    }

    #[test]
    fn identical_pair_converges_immediately() {
        let (s, layout) = setup();
        let ctl = ControlConfig::new(s.basis().dim(), 0.1, 1e-2, 0.9);
        let sampler = XiSampler::default();
        let u = SpectralField::unit(0, s.basis().dim()).scale(0.1);
        let rep = couple(
            &CouplingSetup {
                solver: &s,
                layout: &layout,
                sampler: &sampler,
                ctl: &ctl,
                seed: 1,
                lineage: 0,
            },
            &u,
            &u,
            5,
        )
        .unwrap();
        assert_eq!(rep.stop, CouplingStop::Converged);
        assert!(rep.steps.is_empty());
        assert_eq!(rep.q_max, 0.0);
        assert!(rep.into_result().is_ok());
    }

    #[test]
    fn violation_becomes_error() {
        let rep = CouplingReport {
            steps: vec![CouplingStep {
                k: 3,
                dist: 1.0,
                next_dist: 2.0,
                qhat: 2.0,
                phi_norm: 0.0,
                phi_bound: 0.0,
                eps_hat: 0.0,
                residual: 0.0,
                c2_hat: 0.0,
                predicted_q: 0.0,
            }],
            stop: CouplingStop::SqueezingViolated,
            q_max: 2.0,
            q_geo_mean: 2.0,
            c_hat: 0.0,
            c2_hat: 0.0,
            eps_max: 0.0,
            m: 1,
            gamma: 0.1,
        };
        assert!(matches!(
            rep.into_result(),
            Err(Error::SqueezingViolated { step: 3, .. })
        ));
    }
}
