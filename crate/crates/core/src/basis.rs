//! Stokes eigenbasis of the periodic strip `[0, L) x (0, 1)` with free-slip walls.
//!
//! Every velocity field is stored through its coefficients in the orthonormal
//! eigenbasis `phi_k = curl(psi_k)`, where the stream functions are
//! `psi_k = N_k E_m(x) sin(n pi y)` with `E_m = cos(2 pi m x / L)` for `m >= 0`
//! and `E_m = sin(2 pi |m| x / L)` for `m < 0`. The normalisation `N_k` makes
//! `||phi_k||_{L2} = 1`, so the `H`, `V` and `V'` norms are diagonal.

use std::cmp::Ordering;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Domain and physical parameters of the truncated strip.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSpec<T> {
    /// Period `L` of the strip in `x`.
    pub length: T,
    /// Kinematic viscosity `nu`.
    pub viscosity: T,
    /// Linear (Ekman) damping coefficient `a`.
    pub damping: T,
    /// Largest x-wavenumber kept, `|m| <= mx`.
    pub mx: usize,
    /// Largest y-wavenumber kept, `1 <= n <= ny`.
    pub ny: usize,
}

impl<T: Real> DomainSpec<T> {
    pub fn new(length: T, viscosity: T, damping: T, mx: usize, ny: usize) -> Result<Self> {
        let spec = DomainSpec {
            length,
            viscosity,
            damping,
            mx,
            ny,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length.is_finite() && self.length > T::zero()) {
            return Err(Error::invalid(format!(
                "domain length must be positive, got {}",
                self.length
            )));
        }
        if !(self.viscosity.is_finite() && self.viscosity > T::zero()) {
            return Err(Error::invalid(format!(
                "viscosity must be positive, got {}",
                self.viscosity
            )));
        }
        if !(self.damping.is_finite() && self.damping >= T::zero()) {
            return Err(Error::invalid(format!(
                "damping must be nonnegative, got {}",
                self.damping
            )));
        }
        if self.ny == 0 {
            return Err(Error::invalid("ny must be at least 1"));
        }
        Ok(())
    }

    /// Number of retained modes `K = (2 mx + 1) ny`.
    pub fn mode_count(&self) -> usize {
        (2 * self.mx + 1) * self.ny
    }

    /// Same physics at a different truncation.
    pub fn with_truncation(&self, mx: usize, ny: usize) -> Self {
        DomainSpec {
            mx,
            ny,
            ..self.clone()
        }
    }
}

/// Wavenumber pair of a basis element. Negative `m` selects the sine partner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModeIndex {
    pub m: i32,
    pub n: u32,
}

impl ModeIndex {
    pub const fn new(m: i32, n: u32) -> Self {
        ModeIndex { m, n }
    }

    pub fn is_valid_for<T>(&self, spec: &DomainSpec<T>) -> bool {
        self.m.unsigned_abs() as usize <= spec.mx && self.n >= 1 && self.n as usize <= spec.ny
    }
}

/// Stokes eigenvalue `alpha(m, n) = (2 pi |m| / L)^2 + (pi n)^2`.
pub fn stokes_eigenvalue<T: Real>(mode: ModeIndex, spec: &DomainSpec<T>) -> Result<T> {
    if !mode.is_valid_for(spec) {
        return Err(Error::invalid(format!(
            "mode ({}, {}) outside truncation |m| <= {}, 1 <= n <= {}",
            mode.m, mode.n, spec.mx, spec.ny
        )));
    }
    Ok(eigenvalue_unchecked(mode, spec.length))
}

fn eigenvalue_unchecked<T: Real>(mode: ModeIndex, length: T) -> T {
    let pi = T::PI();
    let kx = T::lit(2.0) * pi * T::from_count(mode.m.unsigned_abs() as usize) / length;
    let ky = pi * T::from_count(mode.n as usize);
    kx * kx + ky * ky
}

/// Poincare constant `lambda_1`: the smallest retained eigenvalue.
///
/// Mode `(0, 1)` is always retained, so this is `pi^2` for every truncation
/// and every strip length.
pub fn poincare_constant<T: Real>(spec: &DomainSpec<T>) -> T {
    let mut best = eigenvalue_unchecked(ModeIndex::new(0, 1), spec.length);
    for n in 1..=spec.ny as u32 {
        for m in -(spec.mx as i32)..=(spec.mx as i32) {
            let a = eigenvalue_unchecked(ModeIndex::new(m, n), spec.length);
            if a < best {
                best = a;
            }
        }
    }
    best
}

/// Coefficient vector of a velocity field in the Stokes eigenbasis.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField<T: Real> {
    pub coeffs: DVector<T>,
}

impl<T: Real> SpectralField<T> {
    pub fn zeros(k: usize) -> Self {
        SpectralField {
            coeffs: DVector::zeros(k),
        }
    }

    pub fn from_vec(v: Vec<T>) -> Self {
        SpectralField {
            coeffs: DVector::from_vec(v),
        }
    }

    pub fn from_vector(coeffs: DVector<T>) -> Self {
        SpectralField { coeffs }
    }

    /// Unit coefficient on basis element `k`.
    pub fn unit(k: usize, dim: usize) -> Self {
        let mut f = Self::zeros(dim);
        f.coeffs[k] = T::one();
        f
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        self.coeffs.as_slice()
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        self.coeffs.as_mut_slice()
    }

    /// `H` inner product.
    pub fn dot(&self, other: &Self) -> T {
        self.coeffs.dot(&other.coeffs)
    }

    /// `H` norm.
    pub fn norm(&self) -> T {
        self.coeffs.norm()
    }

    pub fn norm_squared(&self) -> T {
        self.coeffs.norm_squared()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn scale(&self, s: T) -> Self {
        SpectralField {
            coeffs: &self.coeffs * s,
        }
    }

    pub fn cast<U: Real>(&self) -> SpectralField<U> {
        SpectralField::from_vec(
            self.coeffs
                .iter()
                .map(|c| U::lit(c.to_f64_lossy()))
                .collect(),
        )
    }
}

impl<T: Real> Index<usize> for SpectralField<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.coeffs[i]
    }
}

impl<T: Real> IndexMut<usize> for SpectralField<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.coeffs[i]
    }
}

impl<'a, T: Real> Add<&'a SpectralField<T>> for &'a SpectralField<T> {
    type Output = SpectralField<T>;
    fn add(self, rhs: &'a SpectralField<T>) -> SpectralField<T> {
        SpectralField::from_vector(&self.coeffs + &rhs.coeffs)
    }
}

impl<'a, T: Real> Sub<&'a SpectralField<T>> for &'a SpectralField<T> {
    type Output = SpectralField<T>;
    fn sub(self, rhs: &'a SpectralField<T>) -> SpectralField<T> {
        SpectralField::from_vector(&self.coeffs - &rhs.coeffs)
    }
}

impl<T: Real> Mul<T> for &SpectralField<T> {
    type Output = SpectralField<T>;
    fn mul(self, rhs: T) -> SpectralField<T> {
        self.scale(rhs)
    }
}

impl<T: Real> Neg for &SpectralField<T> {
    type Output = SpectralField<T>;
    fn neg(self) -> SpectralField<T> {
        SpectralField::from_vector(-&self.coeffs)
    }
}

impl<T: Real> AddAssign<&SpectralField<T>> for SpectralField<T> {
    fn add_assign(&mut self, rhs: &SpectralField<T>) {
        self.coeffs += &rhs.coeffs;
    }
}

impl<T: Real> SubAssign<&SpectralField<T>> for SpectralField<T> {
    fn sub_assign(&mut self, rhs: &SpectralField<T>) {
        self.coeffs -= &rhs.coeffs;
    }
}

/// The three norms of a field, evaluated together.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms<T> {
    pub h: T,
    pub v: T,
    pub v_dual: T,
}

/// Enumerated eigenbasis for one [`DomainSpec`].
///
/// Modes are ordered by nondecreasing eigenvalue, ties broken by `n` and then
/// by `m`, both ascending. Every matrix and projection in the crate refers to
/// this order.
#[derive(Clone, Debug)]
pub struct StokesBasis<T: Real> {
    spec: DomainSpec<T>,
    modes: Vec<ModeIndex>,
    eigenvalues: Vec<T>,
    stream_scale: Vec<T>,
    lambda1: T,
}

impl<T: Real> StokesBasis<T> {
    pub fn new(spec: DomainSpec<T>) -> Result<Self> {
        spec.validate()?;
        let mx = spec.mx as i32;
        let mut modes: Vec<(T, ModeIndex)> = Vec::with_capacity(spec.mode_count());
        for n in 1..=spec.ny as u32 {
            for m in -mx..=mx {
                let mode = ModeIndex::new(m, n);
                modes.push((eigenvalue_unchecked(mode, spec.length), mode));
            }
        }
        modes.sort_by(|(a, ma), (b, mb)| {
            a.partial_cmp(b)
                .unwrap_or(Ordering::Equal)
                .then(ma.n.cmp(&mb.n))
                .then(ma.m.cmp(&mb.m))
        });
        let half = T::lit(0.5);
        let quarter = T::lit(0.25);
        let stream_scale = modes
            .iter()
            .map(|(alpha, mode)| {
                // ||psi||^2 = L/2 for m = 0 and L/4 otherwise; ||curl psi||^2 = alpha ||psi||^2.
                let area = if mode.m == 0 { half } else { quarter } * spec.length;
                T::one() / (*alpha * area).sqrt()
            })
            .collect();
        let eigenvalues: Vec<T> = modes.iter().map(|(a, _)| *a).collect();
        let lambda1 = eigenvalues[0];
        Ok(StokesBasis {
            modes: modes.into_iter().map(|(_, m)| m).collect(),
            eigenvalues,
            stream_scale,
            lambda1,
            spec,
        })
    }

    pub fn spec(&self) -> &DomainSpec<T> {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[ModeIndex] {
        &self.modes
    }

    pub fn mode(&self, k: usize) -> ModeIndex {
        self.modes[k]
    }

    /// Position of `mode` in the enumeration.
    pub fn position(&self, mode: ModeIndex) -> Option<usize> {
        self.modes.iter().position(|m| *m == mode)
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, k: usize) -> T {
        self.eigenvalues[k]
    }

    /// Factor `N_k` multiplying the unnormalised stream function of mode `k`.
    pub fn stream_scale(&self, k: usize) -> T {
        self.stream_scale[k]
    }

    pub fn lambda1(&self) -> T {
        self.lambda1
    }

    pub fn zeros(&self) -> SpectralField<T> {
        SpectralField::zeros(self.dim())
    }

    fn check(&self, u: &SpectralField<T>) -> Result<()> {
        Error::check_dim(self.dim(), u.len())
    }

    /// `(||u||, ||u||_1, ||u||_{V'})`.
    pub fn norms(&self, u: &SpectralField<T>) -> Result<Norms<T>> {
        self.check(u)?;
        let (mut h, mut v, mut d) = (T::zero(), T::zero(), T::zero());
        for (c, a) in u.coeffs.iter().zip(&self.eigenvalues) {
            let c2 = *c * *c;
            h += c2;
            v += *a * c2;
            d += c2 / *a;
        }
        Ok(Norms {
            h: h.sqrt(),
            v: v.sqrt(),
            v_dual: d.sqrt(),
        })
    }

    /// `||u||_1^2 = sum alpha_k c_k^2`.
    pub fn v_norm_squared(&self, u: &SpectralField<T>) -> T {
        u.coeffs
            .iter()
            .zip(&self.eigenvalues)
            .fold(T::zero(), |acc, (c, a)| acc + *a * *c * *c)
    }

    /// `||u||_{V'}^2 = sum c_k^2 / alpha_k`.
    pub fn v_dual_norm_squared(&self, u: &SpectralField<T>) -> T {
        u.coeffs
            .iter()
            .zip(&self.eigenvalues)
            .fold(T::zero(), |acc, (c, a)| acc + *c * *c / *a)
    }

    /// Equivalent scalar product `[u, v] = <u, v>_1 - (lambda_1 / 2) <u, v>`.
    pub fn bracket(&self, u: &SpectralField<T>, v: &SpectralField<T>) -> Result<T> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.bracket_unchecked(u.as_slice(), v.as_slice()))
    }

    pub(crate) fn bracket_unchecked(&self, u: &[T], v: &[T]) -> T {
        let shift = self.lambda1 * T::lit(0.5);
        u.iter()
            .zip(v.iter())
            .zip(&self.eigenvalues)
            .fold(T::zero(), |acc, ((c, d), a)| acc + (*a - shift) * *c * *d)
    }

    /// Sum of `c_k^2` over modes with `alpha_k > cutoff`.
    pub fn tail_energy(&self, u: &SpectralField<T>, cutoff: T) -> T {
        u.coeffs
            .iter()
            .zip(&self.eigenvalues)
            .filter(|(_, a)| **a > cutoff)
            .fold(T::zero(), |acc, (c, _)| acc + *c * *c)
    }

    /// Re-expresses `u` in the basis `target`, dropping modes it lacks and
    /// zero-filling new ones.
    pub fn transfer(
        &self,
        u: &SpectralField<T>,
        target: &StokesBasis<T>,
    ) -> Result<SpectralField<T>> {
        self.check(u)?;
        let mut out = target.zeros();
        for (k, mode) in self.modes.iter().enumerate() {
            if let Some(j) = target.position(*mode) {
                out[j] = u[k];
            }
        }
        Ok(out)
    }
}

/// Free-function form of [`StokesBasis::norms`].
pub fn norms<T: Real>(u: &SpectralField<T>, basis: &StokesBasis<T>) -> Result<Norms<T>> {
    basis.norms(u)
}

/// Free-function form of [`StokesBasis::bracket`].
pub fn bracket<T: Real>(
    u: &SpectralField<T>,
    v: &SpectralField<T>,
    basis: &StokesBasis<T>,
) -> Result<T> {
    basis.bracket(u, v)
}
