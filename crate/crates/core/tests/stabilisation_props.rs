mod common;

use common::{random_field, solver_with};
use kickflow::stabilisation::{gamma_grid, CouplingStop, RightInverse};
use kickflow::{
    assemble_gram, couple, epsilon_check, phi, right_inverse_apply, tune, Control, CouplingSetup,
    Error, Field, Layout, ModeIndex, Noise, Tangents, XiSampler,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn small(nu: f64) -> (kickflow::Integrator, Layout) {
    let b = common::basis(common::LENGTH, nu, 2, 3);
    let layout = Layout::new(&Noise::default(), &b).unwrap();
    (solver_with(b, 0.01, true), layout)
}

fn ops_at(s: &kickflow::Integrator, layout: &Layout, seed: u64) -> Tangents {
    let src = kickflow::KickSource::new(layout.clone(), seed);
    let u0 = random_field(s.basis().dim(), seed, 2.0);
    let base = s.flow(&u0, &src.kick(0, 0)).unwrap();
    assemble_gram(s, &base).unwrap()
}

fn full(layout: &Layout, gamma: f64) -> Control {
    Control::new(layout.dim(), gamma, 1e-2, 0.9)
}

#[test]
fn right_inverse_matches_its_spectral_description() {
    let (s, layout) = small(0.1);
    let ops = ops_at(&s, &layout, 1);
    let f = random_field(ops.dim(), 4, 1.0);
    let lmin = ops.min_gram_eigenvalue();
    let sv_a: Vec<f64> = ops
        .a_matrix
        .clone()
        .singular_values()
        .iter()
        .copied()
        .collect();
    let smax = sv_a.iter().cloned().fold(0.0, f64::max);
    for gamma in [1e-1, 1e-3, 1e-6] {
        let ctl = full(&layout, gamma);
        let r = RightInverse::new(&ops, &ctl, &layout).unwrap();
        let control = right_inverse_apply(&ops, &f, &ctl, &layout).unwrap();
        let af = &ops.a_matrix * control.to_flat();
        let res = (&af - &f.coeffs).norm();
        assert!(res <= 2.0 * gamma / lmin * f.norm());
        // Singular values of A^T (A A^T + gamma)^{-1} are sigma / (sigma^2 + gamma).
        let want = sv_a.iter().map(|s| s / (s * s + gamma)).fold(0.0, f64::max);
        assert!((r.norm() - want).abs() <= 1e-8 * want, "gamma {gamma}");
        assert!(r.norm() <= smax / (lmin + gamma) * (1.0 + 1e-12));
        assert_eq!(r.apply(&Field::zeros(ops.dim())).unwrap().norm(), 0.0);
    }
}

#[test]
fn epsilon_decreases_along_gamma_halving() {
    let (s, layout) = small(0.1);
    let ops = ops_at(&s, &layout, 2);
    let mut prev = f64::INFINITY;
    for j in 0..16 {
        let eps = epsilon_check(&ops, &full(&layout, 0.1 / 2f64.powi(j)), &layout).unwrap();
        assert!(eps <= prev * (1.0 + 1e-10), "step {j}: {eps} > {prev}");
        prev = eps;
    }
    assert!(prev < 1e-3);
}

#[test]
fn tuner_returns_the_first_feasible_pair() {
    let (s, layout) = small(0.1);
    let ops = ops_at(&s, &layout, 3);
    let template = Control::new(1, 1.0, 1e-2, 0.9);
    let k = ops.dim();
    let cheapest = epsilon_check(&ops, &Control::new(k, 0.1, 1e-2, 0.9), &layout).unwrap();
    let t = tune(&ops, &layout, cheapest, &template).unwrap();
    assert_eq!((t.config.m, t.config.gamma), (k, 0.1));
    assert_eq!(t.trace.len(), 1);
    let t = tune(&ops, &layout, 0.1, &template).unwrap();
    assert!(t.epsilon <= 0.1);
    let grid = gamma_grid::<f64>();
    for (m, g, e) in &t.trace[..t.trace.len() - 1] {
        assert!(*e > 0.1, "({m}, {g}) was feasible but skipped");
    }
    assert!(grid.contains(&t.config.gamma));
    match tune(&ops, &layout, 0.0, &template) {
        Err(Error::TuningFailed { best_eps }) => assert!(best_eps > 0.0),
        other => panic!("expected failure, got {other:?}"),
    }
}

#[test]
fn control_is_bounded_by_the_operator_norm_product() {
    let (s, layout) = small(0.1);
    let ops = ops_at(&s, &layout, 4);
    let ctl = Control::new(layout.dim() / 2, 1e-4, 1e-2, 0.9);
    let r = RightInverse::new(&ops, &ctl, &layout).unwrap();
    let c_hat = r.norm() * kickflow::linearization::operator_norm(&ops.psi2);
    for seed in 0..100u64 {
        let u = random_field(ops.dim(), 1000 + seed, 1.0);
        let v = &u + &random_field(ops.dim(), 2000 + seed, 1e-2);
        let control = r.phi(&ops, &u, &v).unwrap();
        assert!(control.norm() <= c_hat * (&u - &v).norm() * (1.0 + 1e-12));
        // Only the first M noise coordinates may be active.
        let flat = control.to_flat();
        for j in 0..layout.dim() {
            if layout.rank(j) >= ctl.m {
                assert_eq!(flat[j], 0.0);
            }
        }
    }
    let u = random_field(ops.dim(), 1, 1.0);
    assert_eq!(phi(&u, &u, &ops, &ctl, &layout).unwrap().norm(), 0.0);
}

#[test]
fn coupling_under_strong_dissipation_is_contractive() {
    let (s, layout) = small(1.0);
    let sampler = XiSampler::default();
    let ctl = Control::new(layout.dim(), 1e-3, 1e-2, 0.9);
    let setup = CouplingSetup {
        solver: &s,
        layout: &layout,
        sampler: &sampler,
        ctl: &ctl,
        seed: 5,
        lineage: 0,
    };
    let u0 = random_field(s.basis().dim(), 1, 0.5);
    let v0 = &u0 + &random_field(s.basis().dim(), 2, 1e-3);
    let report = couple(&setup, &u0, &v0, 3).unwrap();
    assert!(!report.violated());
    assert!(report.q_max < 0.5, "{}", report.q_max);
    for step in &report.steps {
        assert!(step.next_dist <= step.predicted_q * step.dist * (1.0 + 1e-9));
        assert!(step.phi_norm <= step.phi_bound * step.dist * (1.0 + 1e-12));
    }
    let same = couple(&setup, &u0, &u0, 3).unwrap();
    assert_eq!(same.stop, CouplingStop::Converged);
    assert!(same.steps.is_empty());
    let far = &u0 + &Field::unit(0, u0.len()).scale(1.0);
    assert!(couple(&setup, &u0, &far, 1).is_err());
}

#[test]
fn degenerate_coupling_contracts_by_the_stokes_factor() {
    let (s, _) = small(0.1);
    let b = s.basis();
    let layout = Layout::from_amplitudes(2, b.dim(), vec![0.0; 2 * b.dim()]).unwrap();
    let sampler = XiSampler::default();
    let ctl = Control::new(b.dim(), 1e-2, 1e-2, 0.9);
    let setup = CouplingSetup {
        solver: &s,
        layout: &layout,
        sampler: &sampler,
        ctl: &ctl,
        seed: 1,
        lineage: 0,
    };
    let g = Field::unit(b.position(ModeIndex::new(0, 1)).unwrap(), b.dim()).scale(1e-3);
    let report = couple(&setup, &b.zeros(), &g, 4).unwrap();
    let psi1 = (-0.1 * b.lambda1()).exp();
    for step in &report.steps {
        assert_eq!(step.phi_norm, 0.0);
        assert!((step.qhat - psi1).abs() < 1e-10);
    }
}

#[test]
fn violation_becomes_an_error() {
    let step = kickflow::stabilisation::CouplingStep {
        k: 3,
        dist: 1e-3,
        next_dist: 2e-2,
        qhat: 20.0,
        phi_norm: 0.0,
        phi_bound: 0.0,
        eps_hat: 0.0,
        residual: 0.0,
        c2_hat: 0.0,
        predicted_q: 0.0,
    };
    let report = kickflow::CouplingReport {
        steps: vec![step],
        stop: CouplingStop::SqueezingViolated,
        q_max: 20.0,
        q_geo_mean: 20.0,
        c_hat: 0.0,
        c2_hat: 0.0,
        eps_max: 0.0,
        m: 1,
        gamma: 0.1,
    };
    assert!(report.violated());
    match report.into_result() {
        Err(Error::SqueezingViolated { step, qhat }) => assert_eq!((step, qhat), (3, 20.0)),
        other => panic!("expected violation, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn control_is_exactly_linear(s in -3.0f64..3.0, seed in 0u64..1000) {
        let (solver, layout) = small(0.1);
        let ops = ops_at(&solver, &layout, 6);
        let ctl = full(&layout, 1e-3);
        let r = RightInverse::new(&ops, &ctl, &layout).unwrap();
        let u = random_field(ops.dim(), seed, 1.0);
        let w = random_field(ops.dim(), seed + 1, 1.0);
        let one = r.phi(&ops, &u, &(&u + &w)).unwrap();
        let scaled = r.phi(&ops, &u, &(&u + &w.scale(s))).unwrap();
        let diff: DMatrix<f64> = &scaled.coeffs - &one.coeffs * s;
        prop_assert!(diff.amax() <= 1e-12 * one.norm().max(1.0) * s.abs().max(1.0));
    }
}
