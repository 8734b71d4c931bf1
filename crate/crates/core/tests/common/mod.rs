//! Closed-form evaluation of the Stokes eigenfields, written independently
//! of the library, for use as a test oracle.

#![allow(dead_code)]

use std::f64::consts::PI;

use kickflow::{Basis, Domain, Field};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mode {
    pub m: i32,
    pub n: u32,
}

pub fn alpha(mode: Mode, length: f64) -> f64 {
    let kx = 2.0 * PI * mode.m.unsigned_abs() as f64 / length;
    let ky = PI * mode.n as f64;
    kx * kx + ky * ky
}

/// Enumeration sorted by eigenvalue, then `n`, then `m`.
pub fn enumerate(mx: i32, ny: u32, length: f64) -> Vec<Mode> {
    let mut out = Vec::new();
    for n in 1..=ny {
        for m in -mx..=mx {
            out.push(Mode { m, n });
        }
    }
    out.sort_by(|a, b| {
        alpha(*a, length)
            .partial_cmp(&alpha(*b, length))
            .unwrap()
            .then(a.n.cmp(&b.n))
            .then(a.m.cmp(&b.m))
    });
    out
}

/// Velocity `(u1, u2)` and gradient `[[d_x u1, d_y u1], [d_x u2, d_y u2]]`
/// of the unit-norm eigenfield at `(x, y)`.
pub fn eigenfield(mode: Mode, length: f64, x: f64, y: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let k = 2.0 * PI * mode.m.unsigned_abs() as f64 / length;
    let a = alpha(mode, length);
    // Mean-square of the x factor over one period.
    let msq = if mode.m == 0 { 1.0 } else { 0.5 };
    // ||grad psi||^2 = a * ||psi||^2 = a * N^2 * L * msq / 2.
    let norm = 1.0 / (a * length * msq / 2.0).sqrt();
    let (e, de, dde) = if mode.m >= 0 {
        ((k * x).cos(), -k * (k * x).sin(), -k * k * (k * x).cos())
    } else {
        ((k * x).sin(), k * (k * x).cos(), -k * k * (k * x).sin())
    };
    let q = PI * mode.n as f64;
    let (s, c) = ((q * y).sin(), (q * y).cos());
    let u1 = norm * e * q * c;
    let u2 = -norm * de * s;
    let grad = [
        [norm * de * q * c, -norm * e * q * q * s],
        [-norm * dde * s, -norm * de * q * c],
    ];
    ([u1, u2], grad)
}

/// Quadrature rule on `[0, L) x (0, 1)`: uniform in `x`, Gauss-Legendre in `y`.
pub struct Rule {
    pub x: Vec<f64>,
    pub wx: f64,
    pub y: Vec<f64>,
    pub wy: Vec<f64>,
}

pub fn rule(length: f64, nx: usize, ny: usize) -> Rule {
    let (y, wy) = kickflow::quadrature::gauss_legendre(ny, 0.0, 1.0);
    Rule {
        x: (0..nx).map(|i| length * i as f64 / nx as f64).collect(),
        wx: length / nx as f64,
        y,
        wy,
    }
}

/// Velocity and gradient of `sum c_k phi_k` at a point.
pub fn field_at(
    u: &Field,
    modes: &[Mode],
    length: f64,
    x: f64,
    y: f64,
) -> ([f64; 2], [[f64; 2]; 2]) {
    let mut v = [0.0; 2];
    let mut g = [[0.0; 2]; 2];
    for (k, mode) in modes.iter().enumerate() {
        let c = u[k];
        if c == 0.0 {
            continue;
        }
        let (vk, gk) = eigenfield(*mode, length, x, y);
        for i in 0..2 {
            v[i] += c * vk[i];
            for j in 0..2 {
                g[i][j] += c * gk[i][j];
            }
        }
    }
    (v, g)
}

/// `<(u . grad) u, phi_k>` for every `k`, by direct quadrature of the
/// velocity form.
pub fn advection_oracle(u: &Field, modes: &[Mode], length: f64) -> Vec<f64> {
    let q = rule(length, 64, 56);
    let mut out = vec![0.0; modes.len()];
    for &x in &q.x {
        for (&y, &wy) in q.y.iter().zip(&q.wy) {
            let (v, g) = field_at(u, modes, length, x, y);
            let adv = [
                v[0] * g[0][0] + v[1] * g[0][1],
                v[0] * g[1][0] + v[1] * g[1][1],
            ];
            for (k, mode) in modes.iter().enumerate() {
                let (phi, _) = eigenfield(*mode, length, x, y);
                out[k] += q.wx * wy * (adv[0] * phi[0] + adv[1] * phi[1]);
            }
        }
    }
    out
}

pub fn basis(length: f64, nu: f64, mx: usize, ny: usize) -> Basis {
    Basis::new(Domain::new(length, nu, 0.0, mx, ny).unwrap()).unwrap()
}

/// Deterministic pseudo-random field with decaying coefficients.
pub fn random_field(dim: usize, seed: u64, scale: f64) -> Field {
    use rand::Rng;
    let mut rng = kickflow::rng::stream(seed, kickflow::rng::StreamDomain::Auxiliary(7), 0, 0);
    Field::from_vec(
        (0..dim)
            .map(|k| scale * rng.random_range(-1.0..1.0) / (1.0 + k as f64).sqrt())
            .collect(),
    )
}

pub const NU: f64 = 0.1;
pub const LENGTH: f64 = 4.0;

pub fn default_basis() -> Basis {
    basis(LENGTH, NU, 5, 5)
}

pub fn solver_with(basis: Basis, dt: f64, record: bool) -> kickflow::Integrator {
    kickflow::Solver::new(basis, kickflow::Config::with_dt(dt).recording(record)).unwrap()
}

pub fn default_solver(dt: f64) -> kickflow::Integrator {
    solver_with(default_basis(), dt, false)
}

pub fn default_source(basis: &Basis, seed: u64) -> kickflow::KickSource<f64> {
    let layout = kickflow::Layout::new(&kickflow::Noise::default(), basis).unwrap();
    kickflow::KickSource::new(layout, seed)
}
