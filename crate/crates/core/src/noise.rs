//! Decomposable kick law on `E = L2([0, 1], H)`.
//!
//! The basis of `E` is `e_(p,k)(t, x) = tau_p(t) phi_k(x)` with `tau_p` the
//! orthonormal shifted Legendre polynomials. A kick is
//! `eta = sum b_(p,k) xi_(p,k) e_(p,k)` with independent `xi` drawn from the
//! density `rho(r) = (15/16)(1 - r^2)^2` on `[-1, 1]`.

use std::cmp::Ordering;
use std::ops::{Add, Sub};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use crate::basis::{SpectralField, StokesBasis};
use crate::error::{Error, Result};
use crate::quadrature::shifted_legendre;
use crate::scalar::Real;

/// Amplitude law `b_(p,k) = B0 (1 + p)^(-s_t) (1 + alpha_k)^(-s_x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec<T> {
    /// Number of time-basis functions `P`.
    pub time_modes: usize,
    pub b0: T,
    pub s_t: T,
    pub s_x: T,
}

impl<T: Real> Default for NoiseSpec<T> {
    fn default() -> Self {
        NoiseSpec {
            time_modes: 2,
            b0: T::one(),
            s_t: T::lit(2.0),
            s_x: T::one(),
        }
    }
}

impl<T: Real> NoiseSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.time_modes == 0 {
            return Err(Error::invalid("noise needs at least one time mode"));
        }
        if !(self.b0.is_finite() && self.b0 >= T::zero()) {
            return Err(Error::invalid(format!(
                "B0 must be nonnegative, got {}",
                self.b0
            )));
        }
        if !(self.s_t >= T::lit(2.0)) {
            return Err(Error::invalid(format!(
                "s_t must be at least 2, got {}",
                self.s_t
            )));
        }
        if !(self.s_x >= T::one()) {
            return Err(Error::invalid(format!(
                "s_x must be at least 1, got {}",
                self.s_x
            )));
        }
        Ok(())
    }
}

/// Amplitudes for one basis together with the decreasing-amplitude order
/// that defines the projections `P_M`.
#[derive(Clone, Debug)]
pub struct NoiseLayout<T: Real> {
    time_modes: usize,
    space_modes: usize,
    /// Row-major `(p, k)`.
    amplitudes: Vec<T>,
    /// Flat indices sorted by decreasing amplitude.
    order: Vec<usize>,
    /// Inverse of `order`.
    rank: Vec<usize>,
}

impl<T: Real> NoiseLayout<T> {
    pub fn new(spec: &NoiseSpec<T>, basis: &StokesBasis<T>) -> Result<Self> {
        spec.validate()?;
        let k = basis.dim();
        let p = spec.time_modes;
        let mut amplitudes = Vec::with_capacity(p * k);
        for pi in 0..p {
            let tfac = (T::one() + T::from_count(pi)).powf(-spec.s_t);
            for kk in 0..k {
                let xfac = (T::one() + basis.eigenvalue(kk)).powf(-spec.s_x);
                amplitudes.push(spec.b0 * tfac * xfac);
            }
        }
        Self::from_amplitudes(p, k, amplitudes)
    }

    /// Layout with explicit amplitudes (row-major `(p, k)`).
    pub fn from_amplitudes(
        time_modes: usize,
        space_modes: usize,
        amplitudes: Vec<T>,
    ) -> Result<Self> {
        Error::check_dim(time_modes * space_modes, amplitudes.len())?;
        if amplitudes
            .iter()
            .any(|b| !(b.is_finite() && *b >= T::zero()))
        {
            return Err(Error::invalid("amplitudes must be finite and nonnegative"));
        }
        let mut order: Vec<usize> = (0..amplitudes.len()).collect();
        // Decreasing b; ties by spatial mode order, then time index.
        order.sort_by(|&i, &j| {
            amplitudes[j]
                .partial_cmp(&amplitudes[i])
                .unwrap_or(Ordering::Equal)
                .then((i % space_modes).cmp(&(j % space_modes)))
                .then((i / space_modes).cmp(&(j / space_modes)))
        });
        let mut rank = vec![0; order.len()];
        for (r, &idx) in order.iter().enumerate() {
            rank[idx] = r;
        }
        Ok(NoiseLayout {
            time_modes,
            space_modes,
            amplitudes,
            order,
            rank,
        })
    }

    pub fn time_modes(&self) -> usize {
        self.time_modes
    }

    pub fn space_modes(&self) -> usize {
        self.space_modes
    }

    /// Dimension `P K` of the truncated noise space.
    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[T] {
        &self.amplitudes
    }

    pub fn amplitude(&self, p: usize, k: usize) -> T {
        self.amplitudes[p * self.space_modes + k]
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Position of flat entry `idx` in the decreasing-amplitude order.
    pub fn rank(&self, idx: usize) -> usize {
        self.rank[idx]
    }

    pub fn zeros(&self) -> KickPath<T> {
        KickPath::zeros(self.time_modes, self.space_modes)
    }

    /// Noise basis element `e_j` for flat index `j`.
    pub fn basis_element(&self, j: usize) -> KickPath<T> {
        let mut path = self.zeros();
        path.coeffs[(j / self.space_modes, j % self.space_modes)] = T::one();
        path
    }
}

/// One kick: a `P x K` coefficient matrix in the tensor basis of `E`.
#[derive(Clone, Debug, PartialEq)]
pub struct KickPath<T: Real> {
    pub coeffs: DMatrix<T>,
}

impl<T: Real> KickPath<T> {
    pub fn zeros(time_modes: usize, space_modes: usize) -> Self {
        KickPath {
            coeffs: DMatrix::zeros(time_modes, space_modes),
        }
    }

    /// Builds a path from its row-major flat coefficient vector.
    pub fn from_flat(time_modes: usize, space_modes: usize, flat: &[T]) -> Result<Self> {
        Error::check_dim(time_modes * space_modes, flat.len())?;
        Ok(KickPath {
            coeffs: DMatrix::from_row_slice(time_modes, space_modes, flat),
        })
    }

    /// Constant-in-time path equal to `field` (only the `p = 0` row is set).
    pub fn constant(field: &SpectralField<T>, time_modes: usize) -> Self {
        let mut path = Self::zeros(time_modes, field.len());
        for k in 0..field.len() {
            path.coeffs[(0, k)] = field[k];
        }
        path
    }

    pub fn time_modes(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn space_modes(&self) -> usize {
        self.coeffs.ncols()
    }

    /// Row-major flat coefficients, matching [`NoiseLayout`] indexing.
    pub fn to_flat(&self) -> DVector<T> {
        let (p, k) = self.coeffs.shape();
        DVector::from_fn(p * k, |j, _| self.coeffs[(j / k, j % k)])
    }

    /// `||eta||_E`, the Frobenius norm of the coefficients.
    pub fn norm(&self) -> T {
        self.coeffs.norm()
    }

    pub fn scale(&self, s: T) -> Self {
        KickPath {
            coeffs: &self.coeffs * s,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// `||eta||^2_{L2([0,1], V')} = sum c_(p,k)^2 / alpha_k`.
    pub fn v_dual_norm_squared(&self, basis: &StokesBasis<T>) -> T {
        let mut acc = T::zero();
        for k in 0..self.space_modes() {
            let a = basis.eigenvalue(k);
            for p in 0..self.time_modes() {
                let c = self.coeffs[(p, k)];
                acc += c * c / a;
            }
        }
        acc
    }

    /// Field `sum_p tau[p] row_p` for precomputed time-basis values.
    pub fn eval_with(&self, tau: &[T], out: &mut [T]) {
        out.fill(T::zero());
        for (p, &w) in tau.iter().enumerate().take(self.time_modes()) {
            if w == T::zero() {
                continue;
            }
            for (k, o) in out.iter_mut().enumerate() {
                *o += w * self.coeffs[(p, k)];
            }
        }
    }
}

impl<'a, T: Real> Add<&'a KickPath<T>> for &'a KickPath<T> {
    type Output = KickPath<T>;
    fn add(self, rhs: &'a KickPath<T>) -> KickPath<T> {
        KickPath {
            coeffs: &self.coeffs + &rhs.coeffs,
        }
    }
}

impl<'a, T: Real> Sub<&'a KickPath<T>> for &'a KickPath<T> {
    type Output = KickPath<T>;
    fn sub(self, rhs: &'a KickPath<T>) -> KickPath<T> {
        KickPath {
            coeffs: &self.coeffs - &rhs.coeffs,
        }
    }
}

/// Orthonormal time-basis values at `t` in the scalar type `T`.
pub fn time_basis<T: Real>(count: usize, t: T) -> Vec<T> {
    let mut tau = vec![0.0; count];
    shifted_legendre(count, t.to_f64_lossy(), &mut tau);
    tau.into_iter().map(T::lit).collect()
}

/// Evaluates `eta(t) = sum_p tau_p(t) row_p` as a field.
pub fn eval_kick<T: Real>(eta: &KickPath<T>, t: T) -> Result<SpectralField<T>> {
    if !(t >= T::zero() && t <= T::one()) {
        return Err(Error::invalid(format!(
            "kick evaluated at t = {t}, outside [0, 1]"
        )));
    }
    let tau = time_basis(eta.time_modes(), t);
    let mut out = SpectralField::zeros(eta.space_modes());
    eta.eval_with(&tau, out.as_mut_slice());
    Ok(out)
}

/// `P_M eta`: keeps the first `m` entries of the decreasing-amplitude order.
pub fn project_pm<T: Real>(
    eta: &KickPath<T>,
    m: usize,
    layout: &NoiseLayout<T>,
) -> Result<KickPath<T>> {
    split_projection(eta, m, layout, true)
}

/// `Q_M eta = eta - P_M eta`.
pub fn project_qm<T: Real>(
    eta: &KickPath<T>,
    m: usize,
    layout: &NoiseLayout<T>,
) -> Result<KickPath<T>> {
    split_projection(eta, m, layout, false)
}

fn split_projection<T: Real>(
    eta: &KickPath<T>,
    m: usize,
    layout: &NoiseLayout<T>,
    keep_head: bool,
) -> Result<KickPath<T>> {
    if eta.time_modes() != layout.time_modes() || eta.space_modes() != layout.space_modes() {
        return Err(Error::DimensionMismatch {
            expected: layout.dim(),
            found: eta.time_modes() * eta.space_modes(),
        });
    }
    if m > layout.dim() {
        return Err(Error::invalid(format!(
            "M = {m} exceeds noise dimension {}",
            layout.dim()
        )));
    }
    let k = layout.space_modes();
    let mut out = eta.clone();
    for idx in 0..layout.dim() {
        if (layout.rank(idx) < m) != keep_head {
            out.coeffs[(idx / k, idx % k)] = T::zero();
        }
    }
    Ok(out)
}

/// Radii of the kick support.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupportBound<T> {
    /// `sqrt(sum b^2)`, the `E`-radius of the support.
    pub e_radius: T,
    /// `sup ||eta||^2_{L2([0,1], V')} = sum b_(p,k)^2 / alpha_k`.
    pub v_dual_sup_sq: T,
}

pub fn support_bound<T: Real>(
    layout: &NoiseLayout<T>,
    basis: &StokesBasis<T>,
) -> Result<SupportBound<T>> {
    Error::check_dim(basis.dim(), layout.space_modes())?;
    let k = layout.space_modes();
    let mut e2 = T::zero();
    let mut v2 = T::zero();
    for (idx, b) in layout.amplitudes().iter().enumerate() {
        let b2 = *b * *b;
        e2 += b2;
        v2 += b2 / basis.eigenvalue(idx % k);
    }
    Ok(SupportBound {
        e_radius: e2.sqrt(),
        v_dual_sup_sq: v2,
    })
}

/// Density `rho(r) = (15/16)(1 - r^2)^2` on `[-1, 1]`, zero outside.
pub fn density(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        let s = 1.0 - r * r;
        15.0 / 16.0 * s * s
    }
}

/// Derivative of [`density`].
pub fn density_derivative(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        -15.0 / 4.0 * r * (1.0 - r * r)
    }
}

/// Cumulative distribution of [`density`].
pub fn cdf(r: f64) -> f64 {
    if r <= -1.0 {
        0.0
    } else if r >= 1.0 {
        1.0
    } else {
        0.5 + 15.0 / 16.0 * (r - 2.0 * r * r * r / 3.0 + r.powi(5) / 5.0)
    }
}

/// Inverse-CDF sampler for [`density`] backed by a monotone quantile table.
#[derive(Clone, Debug)]
pub struct XiSampler {
    table: Vec<f64>,
}

impl Default for XiSampler {
    fn default() -> Self {
        Self::new(2048)
    }
}

impl XiSampler {
    /// Table of quantiles at `levels + 1` equally spaced probabilities.
    pub fn new(levels: usize) -> Self {
        let levels = levels.max(2);
        let table = (0..=levels)
            .map(|i| bisect_quantile(i as f64 / levels as f64, -1.0, 1.0))
            .collect();
        XiSampler { table }
    }

    /// `F^{-1}(u)` for `u` in `[0, 1]`, accurate to about `1e-13`.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        if u == 0.5 {
            return 0.0;
        }
        if u > 0.5 {
            return -self.quantile(1.0 - u);
        }
        let levels = self.table.len() - 1;
        let pos = u * levels as f64;
        let i = (pos.floor() as usize).min(levels - 1);
        let (mut lo, mut hi) = (self.table[i], self.table[i + 1]);
        let frac = pos - i as f64;
        let mut r = lo + frac * (hi - lo);
        for _ in 0..60 {
            let f = cdf(r) - u;
            if f.abs() <= 1e-15 {
                break;
            }
            if f > 0.0 {
                hi = r;
            } else {
                lo = r;
            }
            let d = density(r);
            let newton = r - f / d;
            r = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 1e-15 {
                break;
            }
        }
        r
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

fn bisect_quantile(u: f64, mut lo: f64, mut hi: f64) -> f64 {
    if u <= 0.0 {
        return -1.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Draws one kick: independent `xi` per entry, scaled by the amplitudes.
pub fn sample_kick<T: Real, R: RngCore + ?Sized>(
    layout: &NoiseLayout<T>,
    sampler: &XiSampler,
    rng: &mut R,
) -> KickPath<T> {
    let k = layout.space_modes();
    let mut path = layout.zeros();
    for (idx, b) in layout.amplitudes().iter().enumerate() {
        let xi = sampler.sample(rng);
        path.coeffs[(idx / k, idx % k)] = *b * T::lit(xi);
    }
    path
}
