mod common;

use kickflow::noise::{cdf, density, density_derivative, time_basis};
use kickflow::quadrature::gauss_legendre;
use kickflow::rng::kick_stream;
use kickflow::{
    eval_kick, project_pm, project_qm, sample_kick, support_bound, Kick, Layout, Noise, XiSampler,
};
use proptest::prelude::*;

/// `int r^j rho(r) dr` by Gauss-Legendre on `[-1, 1]`.
fn moment(j: i32) -> f64 {
    let (x, w) = gauss_legendre(16, -1.0, 1.0);
    x.iter()
        .zip(&w)
        .map(|(r, w)| w * r.powi(j) * 15.0 / 16.0 * (1.0 - r * r).powi(2))
        .sum()
}

#[test]
fn density_is_normalised_and_c1() {
    assert!((moment(0) - 1.0).abs() < 1e-14);
    assert!((moment(2) - 1.0 / 7.0).abs() < 1e-14);
    assert!((density(0.0) - 15.0 / 16.0).abs() < 1e-15);
    for edge in [-1.0, 1.0] {
        for h in [1e-4, 1e-6] {
            assert!(density(edge - h).abs() < 1e-6 && density(edge + h).abs() < 1e-6);
            assert!(density_derivative(edge - h).abs() < 1e-3);
            assert_eq!(density(edge * (1.0 + h)), 0.0);
        }
    }
    for i in 0..=200 {
        let r = -1.0 + i as f64 / 100.0;
        let h = 1e-6;
        let fd = (density(r + h) - density(r - h)) / (2.0 * h);
        assert!((fd - density_derivative(r)).abs() < 1e-5);
    }
    assert!(cdf(-1.0).abs() < 1e-15 && (cdf(1.0) - 1.0).abs() < 1e-15);
}

#[test]
fn quantile_inverts_the_distribution() {
    let s = XiSampler::default();
    for i in 0..=1000 {
        let u = i as f64 / 1000.0;
        let r = s.quantile(u);
        assert!((cdf(r) - u).abs() < 1e-10, "u = {u}");
    }
}

#[test]
fn sampled_moments_match_the_density() {
    let s = XiSampler::default();
    let n = 1_000_000usize;
    let mut rng = kick_stream(2024, 0, 0);
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let x = s.sample(&mut rng);
        assert!(x.abs() <= 1.0);
        s1 += x;
        s2 += x * x;
    }
    let mean = s1 / n as f64;
    let var = s2 / n as f64 - mean * mean;
    let se_mean = (moment(2) / n as f64).sqrt();
    let se_var = ((moment(4) - moment(2).powi(2)) / n as f64).sqrt();
    assert!(mean.abs() <= 3.0 * se_mean, "mean {mean}");
    assert!((var - 1.0 / 7.0).abs() <= 3.0 * se_var, "var {var}");
}

#[test]
fn draws_respect_the_support_box_and_are_reproducible() {
    let b = common::default_basis();
    let layout = Layout::new(&Noise::default(), &b).unwrap();
    let sampler = XiSampler::default();
    let sup = support_bound(&layout, &b).unwrap();
    let radius: f64 = layout
        .amplitudes()
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    assert!((sup.e_radius - radius).abs() < 1e-15);
    for kick in 0..2000u64 {
        let eta = sample_kick(&layout, &sampler, &mut kick_stream(7, 3, kick));
        for p in 0..layout.time_modes() {
            for k in 0..layout.space_modes() {
                assert!(eta.coeffs[(p, k)].abs() <= layout.amplitude(p, k));
            }
        }
        assert!(eta.norm() <= radius);
        assert!(eta.v_dual_norm_squared(&b) <= sup.v_dual_sup_sq);
    }
    let a = sample_kick(&layout, &sampler, &mut kick_stream(7, 3, 11));
    let c = sample_kick(&layout, &sampler, &mut kick_stream(7, 3, 11));
    assert_eq!(a, c);
    assert_ne!(
        a,
        sample_kick(&layout, &sampler, &mut kick_stream(7, 3, 12))
    );
    assert_ne!(
        a,
        sample_kick(&layout, &sampler, &mut kick_stream(7, 4, 11))
    );
}

#[test]
fn single_amplitude_dual_bound() {
    let b = common::default_basis();
    let mut amps = vec![0.0; b.dim()];
    amps[0] = 2.0;
    let layout = Layout::from_amplitudes(1, b.dim(), amps).unwrap();
    let sup = support_bound(&layout, &b).unwrap();
    let pi2 = std::f64::consts::PI.powi(2);
    assert!((sup.v_dual_sup_sq - 4.0 / pi2).abs() < 1e-15);
    assert!((sup.e_radius - 2.0).abs() < 1e-15);
    let zero = Layout::from_amplitudes(1, b.dim(), vec![0.0; b.dim()]).unwrap();
    assert_eq!(support_bound(&zero, &b).unwrap().v_dual_sup_sq, 0.0);
}

#[test]
fn evaluation_satisfies_parseval() {
    let b = common::default_basis();
    for p in [1usize, 2, 4] {
        let spec = Noise {
            time_modes: p,
            ..Noise::default()
        };
        let layout = Layout::new(&spec, &b).unwrap();
        let eta = sample_kick(
            &layout,
            &XiSampler::default(),
            &mut kick_stream(1, 0, p as u64),
        );
        let (t, w) = gauss_legendre(2 * p, 0.0, 1.0);
        let integral: f64 = t
            .iter()
            .zip(&w)
            .map(|(t, w)| w * eval_kick(&eta, *t).unwrap().norm_squared())
            .sum();
        assert!((integral - eta.norm().powi(2)).abs() < 1e-10 * integral.max(1.0));
    }
    assert!(eval_kick(&Kick::zeros(2, 3), 1.5).is_err());
    assert_eq!(time_basis::<f64>(1, 0.3), vec![1.0]);
}

#[test]
fn constant_row_is_constant_in_time() {
    let b = common::default_basis();
    let row = common::random_field(b.dim(), 2, 1.0);
    let mut eta = Kick::zeros(3, b.dim());
    for k in 0..b.dim() {
        eta.coeffs[(0, k)] = row[k];
    }
    for t in [0.0, 0.25, 0.9, 1.0] {
        assert!((&eval_kick(&eta, t).unwrap() - &row).norm() < 1e-15);
    }
}

/// Sample correlation and its standard error under independence.
fn correlation(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    (sab / (saa * sbb).sqrt(), 1.0 / n.sqrt())
}

#[test]
fn head_and_tail_projections_are_independent() {
    let b = common::default_basis();
    let layout = Layout::new(&Noise::default(), &b).unwrap();
    let sampler = XiSampler::default();
    let m = 4;
    let n = 100_000;
    let k = layout.space_modes();
    // Entries P_M[i] against Q_M[i], plus the two squared norms.
    let mut head = vec![vec![0.0; n]; m + 1];
    let mut tail = vec![vec![0.0; n]; m + 1];
    for s in 0..n {
        let eta = sample_kick(&layout, &sampler, &mut kick_stream(99, 0, s as u64));
        let pm = project_pm(&eta, m, &layout).unwrap();
        let qm = project_qm(&eta, m, &layout).unwrap();
        for i in 0..m {
            let hi = layout.order()[i];
            let ti = layout.order()[m + i];
            head[i][s] = pm.coeffs[(hi / k, hi % k)];
            tail[i][s] = qm.coeffs[(ti / k, ti % k)];
        }
        head[m][s] = pm.norm().powi(2);
        tail[m][s] = qm.norm().powi(2);
    }
    for i in 0..=m {
        let (r, se) = correlation(&head[i], &tail[i]);
        assert!(r.abs() <= 3.0 * se, "pair {i}: corr {r}, se {se}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projections_split_the_identity(m in 0usize..=110, seed in any::<u64>()) {
        let b = common::default_basis();
        let layout = Layout::new(&Noise::default(), &b).unwrap();
        let eta = sample_kick(&layout, &XiSampler::default(), &mut kick_stream(seed, 0, 0));
        let pm = project_pm(&eta, m, &layout).unwrap();
        let qm = project_qm(&eta, m, &layout).unwrap();
        prop_assert_eq!(&(&pm + &qm), &eta);
        let kept = (0..layout.dim()).filter(|&j| pm.to_flat()[j] != 0.0).count();
        prop_assert!(kept <= m);
        for j in 0..layout.dim() {
            if layout.rank(j) >= m {
                prop_assert_eq!(pm.to_flat()[j], 0.0);
            } else {
                prop_assert_eq!(qm.to_flat()[j], 0.0);
            }
        }
        if m == 0 { prop_assert_eq!(pm.norm(), 0.0); }
        if m == layout.dim() { prop_assert_eq!(&pm, &eta); }
        prop_assert!(project_pm(&eta, layout.dim() + 1, &layout).is_err());
    }
}
