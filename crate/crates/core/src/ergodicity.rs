//! Markov chain driver and measure-level diagnostics.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::basis::{SpectralField, StokesBasis};
use crate::blmetric::SignedAtoms;
use crate::dynamics::Solver;
use crate::error::{Error, Result};
use crate::noise::{sample_kick, NoiseLayout, SupportBound, XiSampler};
use crate::rng::{kick_stream, stream, StreamDomain};
use crate::scalar::Real;

/// Kick law together with its sampler.
#[derive(Clone, Debug)]
pub struct KickSource<T: Real> {
    pub layout: NoiseLayout<T>,
    pub sampler: XiSampler,
    pub seed: u64,
}

impl<T: Real> KickSource<T> {
    pub fn new(layout: NoiseLayout<T>, seed: u64) -> Self {
        KickSource {
            layout,
            sampler: XiSampler::default(),
            seed,
        }
    }

    pub fn kick(&self, lineage: u64, index: u64) -> crate::noise::KickPath<T> {
        sample_kick(
            &self.layout,
            &self.sampler,
            &mut kick_stream(self.seed, lineage, index),
        )
    }
}

/// `u_k = S(u_{k-1}, eta_k)` for `k = 1..=n_kicks`; returns `u_0, ..., u_n`.
pub fn markov_run<T: Real>(
    solver: &Solver<T>,
    source: &KickSource<T>,
    u0: &SpectralField<T>,
    n_kicks: usize,
    lineage: u64,
) -> Result<Vec<SpectralField<T>>> {
    let mut out = Vec::with_capacity(n_kicks + 1);
    out.push(u0.clone());
    for k in 0..n_kicks {
        let eta = source.kick(lineage, k as u64);
        let next = solver.time_one_map(out.last().expect("nonempty"), &eta)?;
        out.push(next);
    }
    Ok(out)
}

/// Weighted particle approximation of a measure on `H`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalEnsemble<T: Real> {
    pub particles: Vec<SpectralField<T>>,
    pub weights: Vec<T>,
    /// Markov time.
    pub kick_index: u64,
    /// Noise lineage of each particle.
    pub lineages: Vec<u64>,
}

impl<T: Real> EmpiricalEnsemble<T> {
    /// Uniform weights; particle `i` gets lineage `lineage_base + i`.
    pub fn uniform(particles: Vec<SpectralField<T>>, lineage_base: u64) -> Self {
        let n = particles.len();
        let w = if n == 0 {
            T::zero()
        } else {
            T::one() / T::from_count(n)
        };
        EmpiricalEnsemble {
            lineages: (0..n as u64).map(|i| lineage_base + i).collect(),
            weights: vec![w; n],
            particles,
            kick_index: 0,
        }
    }

    /// Explicit weights, normalised to sum one.
    pub fn weighted(
        particles: Vec<SpectralField<T>>,
        weights: Vec<T>,
        lineage_base: u64,
    ) -> Result<Self> {
        Error::check_dim(particles.len(), weights.len())?;
        let total = weights.iter().fold(T::zero(), |a, w| a + *w);
        if weights.iter().any(|w| !(w.is_finite() && *w >= T::zero())) || !(total > T::zero()) {
            return Err(Error::invalid(
                "weights must be nonnegative with positive sum",
            ));
        }
        let mut ens = Self::uniform(particles, lineage_base);
        ens.weights = weights.into_iter().map(|w| w / total).collect();
        Ok(ens)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.particles.first().map(|p| p.len())
    }

    pub fn validate(&self) -> Result<()> {
        Error::check_dim(self.particles.len(), self.weights.len())?;
        Error::check_dim(self.particles.len(), self.lineages.len())?;
        if let Some(d) = self.dim() {
            for p in &self.particles {
                Error::check_dim(d, p.len())?;
            }
            let total = self.weights.iter().fold(T::zero(), |a, w| a + *w);
            if (total - T::one()).abs() > T::lit(1e-12) {
                return Err(Error::InvalidState(format!("weights sum to {total}")));
            }
        }
        Ok(())
    }

    /// Weighted samples of `<u, w>`.
    pub fn project(&self, w: &SpectralField<T>) -> Vec<(f64, f64)> {
        self.particles
            .iter()
            .zip(&self.weights)
            .map(|(p, wt)| (p.dot(w).to_f64_lossy(), wt.to_f64_lossy()))
            .collect()
    }

    pub fn mean_norm(&self) -> T {
        self.particles
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |a, (p, w)| a + *w * p.norm())
    }

    pub fn max_energy(&self) -> T {
        self.particles
            .iter()
            .fold(T::zero(), |m, p| m.max(p.norm_squared()))
    }
}

/// One application of the Markov operator to every particle.
pub fn ensemble_step<T: Real>(
    ens: &EmpiricalEnsemble<T>,
    solver: &Solver<T>,
    source: &KickSource<T>,
) -> Result<EmpiricalEnsemble<T>> {
    let particles = ens
        .particles
        .par_iter()
        .zip(ens.lineages.par_iter())
        .map(|(u, &lineage)| solver.time_one_map(u, &source.kick(lineage, ens.kick_index)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EmpiricalEnsemble {
        particles,
        weights: ens.weights.clone(),
        kick_index: ens.kick_index + 1,
        lineages: ens.lineages.clone(),
    })
}

/// Time average of the post-burn-in snapshots; identical states are merged.
pub fn krylov_average<T: Real>(
    history: &[EmpiricalEnsemble<T>],
    burn_in: usize,
) -> Result<EmpiricalEnsemble<T>> {
    let used = history.get(burn_in..).unwrap_or(&[]);
    if used.is_empty() || used.iter().all(|e| e.is_empty()) {
        return Err(Error::InsufficientData {
            usable: used.len(),
            required: 1,
        });
    }
    let snap_w = T::one() / T::from_count(used.len());
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut particles = Vec::new();
    let mut weights: Vec<T> = Vec::new();
    for ens in used {
        for (p, w) in ens.particles.iter().zip(&ens.weights) {
            let key: Vec<u64> = p
                .as_slice()
                .iter()
                .map(|c| c.to_f64_lossy().to_bits())
                .collect();
            let mass = *w * snap_w;
            match index.get(&key) {
                Some(&i) => weights[i] += mass,
                None => {
                    index.insert(key, particles.len());
                    particles.push(p.clone());
                    weights.push(mass);
                }
            }
        }
    }
    let last = used.last().expect("nonempty");
    let mut out = EmpiricalEnsemble::weighted(particles, weights, 0)?;
    out.kick_index = last.kick_index;
    Ok(out)
}

/// [`krylov_average`] of a single path.
pub fn krylov_average_path<T: Real>(
    states: &[SpectralField<T>],
    burn_in: usize,
) -> Result<EmpiricalEnsemble<T>> {
    let history: Vec<EmpiricalEnsemble<T>> = states
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let mut e = EmpiricalEnsemble::uniform(vec![s.clone()], 0);
            e.kick_index = k as u64;
            e
        })
        .collect();
    krylov_average(&history, burn_in)
}

/// Clamped linear test functionals `g(u) = clamp(<u, w>, -R, R) / (2 max(1, R))`.
#[derive(Clone, Debug)]
pub struct TestDictionary<T: Real> {
    pub directions: Vec<SpectralField<T>>,
    pub clamp_radius: T,
}

impl<T: Real> TestDictionary<T> {
    /// Unit directions must be nonzero; they are normalised here.
    pub fn new(directions: Vec<SpectralField<T>>, clamp_radius: T) -> Result<Self> {
        if !(clamp_radius > T::zero()) {
            return Err(Error::invalid("clamp radius must be positive"));
        }
        let directions = directions
            .into_iter()
            .map(|d| {
                let n = d.norm();
                if n > T::zero() {
                    Ok(d.scale(T::one() / n))
                } else {
                    Err(Error::invalid("dictionary direction must be nonzero"))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TestDictionary {
            directions,
            clamp_radius,
        })
    }

    /// The `leading` lowest eigenmodes plus `random` Gaussian directions.
    pub fn standard(
        dim: usize,
        leading: usize,
        random: usize,
        seed: u64,
        clamp_radius: T,
    ) -> Result<Self> {
        let mut dirs: Vec<SpectralField<T>> = (0..leading.min(dim))
            .map(|k| SpectralField::unit(k, dim))
            .collect();
        for i in 0..random {
            let mut rng = stream(seed, StreamDomain::Dictionary, i as u64, 0);
            let v: Vec<T> = (0..dim)
                .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
                .collect();
            dirs.push(SpectralField::from_vec(v));
        }
        Self::new(dirs, clamp_radius)
    }

    pub fn eval(&self, j: usize, u: &SpectralField<T>) -> T {
        let r = self.clamp_radius;
        let x = u.dot(&self.directions[j]);
        let c = if x > r {
            r
        } else if x < -r {
            -r
        } else {
            x
        };
        c / (T::lit(2.0) * r.max(T::one()))
    }

    pub fn expectation(&self, j: usize, mu: &EmpiricalEnsemble<T>) -> T {
        mu.particles
            .iter()
            .zip(&mu.weights)
            .fold(T::zero(), |a, (p, w)| a + *w * self.eval(j, p))
    }
}

/// Lower bound on the dual-Lipschitz distance with the direction attaining it.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceBound {
    pub value: f64,
    pub direction: usize,
    /// Best clamp-functional gap alone.
    pub clamp_value: f64,
}

/// Maximum over the dictionary of the clamp-functional gap and the exact
/// one-dimensional bounded-Lipschitz distance of the projections.
pub fn dual_lipschitz_lower<T: Real>(
    mu1: &EmpiricalEnsemble<T>,
    mu2: &EmpiricalEnsemble<T>,
    dict: &TestDictionary<T>,
) -> Result<DistanceBound> {
    if mu1.is_empty() || mu2.is_empty() {
        return Err(Error::invalid(
            "dual-Lipschitz distance needs nonempty ensembles",
        ));
    }
    let d = mu1.dim().expect("nonempty");
    Error::check_dim(d, mu2.dim().expect("nonempty"))?;
    if let Some(w) = dict.directions.first() {
        Error::check_dim(d, w.len())?;
    }
    let per_dir: Vec<(f64, f64)> = (0..dict.directions.len())
        .into_par_iter()
        .map(|j| {
            let clamp = (dict.expectation(j, mu1) - dict.expectation(j, mu2))
                .abs()
                .to_f64_lossy();
            let w = &dict.directions[j];
            let bl = SignedAtoms::difference(&mu1.project(w), &mu2.project(w))
                .distance()
                .0;
            (clamp, bl)
        })
        .collect();
    let mut best = DistanceBound {
        value: 0.0,
        direction: 0,
        clamp_value: 0.0,
    };
    for (j, (clamp, bl)) in per_dir.into_iter().enumerate() {
        best.clamp_value = best.clamp_value.max(clamp);
        let v = clamp.max(bl);
        if v > best.value {
            best.value = v;
            best.direction = j;
        }
    }
    Ok(best)
}

/// Split-half self-distance: a random half of the particles against the rest.
pub fn monte_carlo_floor<T: Real>(
    ens: &EmpiricalEnsemble<T>,
    dict: &TestDictionary<T>,
    seed: u64,
) -> Result<f64> {
    if ens.len() < 2 {
        return Err(Error::InsufficientData {
            usable: ens.len(),
            required: 2,
        });
    }
    let mut idx: Vec<usize> = (0..ens.len()).collect();
    idx.shuffle(&mut stream(seed, StreamDomain::Split, ens.kick_index, 0));
    let half = ens.len() / 2;
    let pick = |ids: &[usize]| {
        EmpiricalEnsemble::weighted(
            ids.iter().map(|&i| ens.particles[i].clone()).collect(),
            ids.iter().map(|&i| ens.weights[i]).collect(),
            0,
        )
    };
    let a = pick(&idx[..half])?;
    let b = pick(&idx[half..])?;
    Ok(dual_lipschitz_lower(&a, &b, dict)?.value)
}

/// `log d_k = log C - c k` by least squares.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixingFit {
    pub c: f64,
    pub big_c: f64,
    pub r2: f64,
    pub points: usize,
}

pub fn mixing_fit(data: &[(f64, f64)]) -> Result<MixingFit> {
    let pts: Vec<(f64, f64)> = data
        .iter()
        .filter(|(_, d)| *d > 0.0 && d.is_finite())
        .map(|(k, d)| (*k, d.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(Error::InsufficientData {
            usable: pts.len(),
            required: 4,
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("mixing fit needs distinct k values"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r2 = if syy <= f64::EPSILON * n * my.abs().max(1.0) {
        1.0
    } else {
        1.0 - sse / syy
    };
    Ok(MixingFit {
        c: -slope,
        big_c: intercept.exp(),
        r2,
        points: pts.len(),
    })
}

/// High-mode energy `sum_{alpha_k > cutoff} c_k^2` per particle and its maximum.
#[derive(Clone, Debug, PartialEq)]
pub struct TailEnergy<T> {
    pub per_particle: Vec<T>,
    pub max: T,
}

pub fn tail_energy<T: Real>(
    ens: &EmpiricalEnsemble<T>,
    basis: &StokesBasis<T>,
    cutoff: T,
) -> Result<TailEnergy<T>> {
    if !(cutoff > T::zero()) {
        return Err(Error::invalid("tail cutoff must be positive"));
    }
    let per_particle: Vec<T> = ens
        .particles
        .iter()
        .map(|p| basis.tail_energy(p, cutoff))
        .collect();
    let max = per_particle.iter().fold(T::zero(), |m, v| m.max(*v));
    Ok(TailEnergy { per_particle, max })
}

/// Constants of the absorbing-set estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Absorbing<T> {
    /// `e^{-nu lambda_1}`.
    pub kappa_bar: T,
    /// `nu^{-2} lambda_1^{-1} sup ||eta||^2_{L2(V')}`.
    pub m2: T,
}

impl<T: Real> Absorbing<T> {
    pub fn new(basis: &StokesBasis<T>, support: &SupportBound<T>) -> Self {
        let nu = basis.spec().viscosity;
        let l1 = basis.lambda1();
        Absorbing {
            kappa_bar: (-nu * l1).exp(),
            m2: support.v_dual_sup_sq / (nu * nu * l1),
        }
    }

    /// `2 M2 / (1 - kappa_bar)`.
    pub fn radius_sq(&self) -> T {
        T::lit(2.0) * self.m2 / (T::one() - self.kappa_bar)
    }

    /// `kappa_bar^k ||u0||^2 + M2 / (1 - kappa_bar)`.
    pub fn envelope(&self, k: usize, initial_energy: T) -> T {
        self.kappa_bar.powi(k as i32) * initial_energy + self.m2 / (T::one() - self.kappa_bar)
    }

    /// `ceil(log(M1 (1 - kappa_bar) / M2) / (nu lambda_1))`, at least 0.
    pub fn k_star(&self, m1: T) -> usize {
        let rate = -self.kappa_bar.ln();
        if !(self.m2 > T::zero()) {
            return 0;
        }
        let x = (m1 * (T::one() - self.kappa_bar) / self.m2).ln() / rate;
        if x > T::zero() {
            x.ceil().to_f64_lossy() as usize
        } else {
            0
        }
    }

    /// Twice [`Absorbing::k_star`].
    pub fn burn_in(&self, m1: T) -> usize {
        2 * self.k_star(m1)
    }
}

/// `count` points on the sphere of `radius` spanned by the `modes` lowest
/// eigenmodes, with nonnegative coordinates. The same `seed` gives the same
/// directions for every radius.
pub fn initial_compact<T: Real>(
    dim: usize,
    modes: usize,
    radius: T,
    count: usize,
    seed: u64,
) -> Result<Vec<SpectralField<T>>> {
    if modes == 0 || modes > dim {
        return Err(Error::invalid(format!(
            "compact needs 1..={dim} modes, got {modes}"
        )));
    }
    (0..count)
        .map(|i| {
            let mut rng = stream(seed, StreamDomain::InitialState, i as u64, 0);
            let mut v = vec![T::zero(); dim];
            let mut n2 = 0.0;
            while n2 == 0.0 {
                for c in v.iter_mut().take(modes) {
                    let x: f64 = rng.sample::<f64, _>(StandardNormal).abs();
                    *c = T::lit(x);
                }
                n2 = v.iter().map(|c| c.to_f64_lossy().powi(2)).sum();
            }
            let s = radius / T::lit(n2.sqrt());
            Ok(SpectralField::from_vec(
                v.into_iter().map(|c| c * s).collect(),
            ))
        })
        .collect()
}
