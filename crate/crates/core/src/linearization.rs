//! Tangent and forcing derivatives of the time-one map.
//!
//! Both are obtained by running the linearised exponential-Euler scheme
//! `w+ = E w + phi (zeta(t_mid) - Q(u_n, w))` along the recorded base
//! trajectory `u_n`. This is the exact derivative of the discrete map, so
//! finite-difference checks converge to round-off.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::basis::SpectralField;
use crate::collocation::Collocation;
use crate::dynamics::{Solver, Trajectory};
use crate::error::{Error, Result};
use crate::noise::{time_basis, KickPath};
use crate::scalar::Real;

/// Jacobians of `S` at one base point `(u, eta)`.
#[derive(Clone, Debug)]
pub struct TangentOperators<T: Real> {
    /// Diagonal of `Psi_1 = e^{-(nu L + a)}`.
    pub psi1: DVector<T>,
    /// `Psi_2 = D_u S - Psi_1`.
    pub psi2: DMatrix<T>,
    /// `A = D_eta S`, shape `K x PK`; columns in row-major `(p, k)` order.
    pub a_matrix: DMatrix<T>,
    /// `G = A A^T`.
    pub gram: DMatrix<T>,
    /// Eigenvalues of `G`, ascending.
    pub gram_eigenvalues: DVector<T>,
    /// Matching orthonormal eigenvectors (columns).
    pub gram_eigenvectors: DMatrix<T>,
    /// `u` of the base point.
    pub base_state: SpectralField<T>,
    /// `S(u, eta)`.
    pub base_endpoint: SpectralField<T>,
}

impl<T: Real> TangentOperators<T> {
    pub fn dim(&self) -> usize {
        self.psi1.len()
    }

    pub fn noise_dim(&self) -> usize {
        self.a_matrix.ncols()
    }

    /// `D_u S = Psi_1 + Psi_2`.
    pub fn jacobian(&self) -> DMatrix<T> {
        let mut j = self.psi2.clone();
        for k in 0..self.dim() {
            j[(k, k)] += self.psi1[k];
        }
        j
    }

    /// `||Psi_1||_2 = max_k psi1_k`.
    pub fn psi1_norm(&self) -> T {
        self.psi1
            .iter()
            .fold(T::zero(), |m, v| if *v > m { *v } else { m })
    }

    pub fn min_gram_eigenvalue(&self) -> T {
        self.gram_eigenvalues[0]
    }

    pub fn max_gram_eigenvalue(&self) -> T {
        self.gram_eigenvalues[self.gram_eigenvalues.len() - 1]
    }
}

/// Which pieces to assemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assembly {
    /// `Psi_1` and `Psi_2` only.
    Split,
    /// Everything including `A` and `G`.
    Full,
}

fn require_recorded<T: Real>(solver: &Solver<T>, base: &Trajectory<T>) -> Result<()> {
    if !base.recorded || base.states.len() != solver.steps() + 1 {
        return Err(Error::InvalidState(
            "base trajectory lacks substep states; run the flow with recording".into(),
        ));
    }
    Error::check_dim(solver.basis().dim(), base.initial().len())
}

/// Runs the linearised scheme for several columns at once.
///
/// `init` is `K x c`; `sources` is `PK x c` in the flat noise layout, with
/// `P = time_modes`. Returns the `K x c` matrix of `w(1)`.
pub fn propagate<T: Real>(
    solver: &Solver<T>,
    base: &Trajectory<T>,
    init: &DMatrix<T>,
    sources: Option<(&DMatrix<T>, usize)>,
) -> Result<DMatrix<T>> {
    require_recorded(solver, base)?;
    let k = solver.basis().dim();
    let cols = init.ncols();
    Error::check_dim(k, init.nrows())?;
    if let Some((src, p)) = sources {
        Error::check_dim(p * k, src.nrows())?;
        Error::check_dim(cols, src.ncols())?;
    }
    let colloc: &Collocation<T> = solver.collocation();
    let decay = solver.decay();
    let gain = solver.gain();
    let dt = solver.dt();
    let half = T::lit(0.5);
    let mut w = init.clone();
    let mut base_fields = colloc.grid_fields();
    let mut base_ws = colloc.workspace();
    for n in 0..solver.steps() {
        colloc.fields_into(base.states[n].as_slice(), &mut base_ws, &mut base_fields);
        let tau = sources.map(|(_, p)| time_basis(p, (T::from_count(n) + half) * dt));
        let bf = &base_fields;
        w.as_mut_slice()
            .par_chunks_mut(k)
            .enumerate()
            .for_each_init(
                || (colloc.workspace(), vec![T::zero(); k]),
                |(ws, q), (c, col)| {
                    colloc.bilinear_with_into(bf, col, ws, q);
                    for i in 0..k {
                        let mut f = T::zero();
                        if let (Some((src, _)), Some(tau)) = (sources, tau.as_ref()) {
                            for (pi, tp) in tau.iter().enumerate() {
                                f += *tp * src[(pi * k + i, c)];
                            }
                        }
                        col[i] = decay[i] * col[i] + gain[i] * (f - q[i]);
                    }
                },
            );
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericDomain(
            "linearised solve produced non-finite values".into(),
        ));
    }
    Ok(w)
}

/// `D_u S(u, eta) w0`.
pub fn tangent_apply<T: Real>(
    solver: &Solver<T>,
    base: &Trajectory<T>,
    w0: &SpectralField<T>,
) -> Result<SpectralField<T>> {
    Error::check_dim(solver.basis().dim(), w0.len())?;
    let init = DMatrix::from_column_slice(w0.len(), 1, w0.as_slice());
    let out = propagate(solver, base, &init, None)?;
    Ok(SpectralField::from_vec(
        out.column(0).iter().copied().collect(),
    ))
}

/// `D_eta S(u, eta) zeta`.
pub fn forcing_derivative_apply<T: Real>(
    solver: &Solver<T>,
    base: &Trajectory<T>,
    zeta: &KickPath<T>,
) -> Result<SpectralField<T>> {
    let k = solver.basis().dim();
    Error::check_dim(k, zeta.space_modes())?;
    let p = zeta.time_modes();
    let flat = zeta.to_flat();
    let src = DMatrix::from_column_slice(p * k, 1, flat.as_slice());
    let out = propagate(solver, base, &DMatrix::zeros(k, 1), Some((&src, p)))?;
    Ok(SpectralField::from_vec(
        out.column(0).iter().copied().collect(),
    ))
}

/// `Q(a, b)`.
pub fn bilinear_q<T: Real>(
    colloc: &Collocation<T>,
    a: &SpectralField<T>,
    b: &SpectralField<T>,
) -> Result<SpectralField<T>> {
    colloc.bilinear(a, b)
}

/// Diagonal of `e^{-(nu alpha_k + a)}` over one unit of time, as the
/// product of the substep factors (bit-identical to the linearised scheme
/// on a zero base).
pub fn psi1_diagonal<T: Real>(solver: &Solver<T>) -> DVector<T> {
    DVector::from_iterator(
        solver.basis().dim(),
        solver.decay().iter().map(|d| {
            let mut acc = T::one();
            for _ in 0..solver.steps() {
                acc = *d * acc;
            }
            acc
        }),
    )
}

/// Assembles the tangent operators at the base trajectory.
///
/// The noise dimension is `P K` with `P` the number of time modes of the
/// kick stored in `base`.
pub fn assemble<T: Real>(
    solver: &Solver<T>,
    base: &Trajectory<T>,
    what: Assembly,
) -> Result<TangentOperators<T>> {
    require_recorded(solver, base)?;
    let k = solver.basis().dim();
    let p = base.kick.time_modes();
    let noise = if what == Assembly::Full { p * k } else { 0 };
    let cols = k + noise;
    let mut init = DMatrix::zeros(k, cols);
    for i in 0..k {
        init[(i, i)] = T::one();
    }
    let mut src = DMatrix::zeros(p * k, cols);
    for j in 0..noise {
        src[(j, k + j)] = T::one();
    }
    let out = if noise > 0 {
        propagate(solver, base, &init, Some((&src, p)))?
    } else {
        propagate(solver, base, &init, None)?
    };
    let psi1 = psi1_diagonal(solver);
    let mut psi2 = out.columns(0, k).into_owned();
    for i in 0..k {
        psi2[(i, i)] -= psi1[i];
    }
    let a_matrix = out.columns(k, noise).into_owned();
    let gram = &a_matrix * a_matrix.transpose();
    let gram = (&gram + gram.transpose()) * T::lit(0.5);
    let (gram_eigenvalues, gram_eigenvectors) = sorted_eigen(&gram);
    Ok(TangentOperators {
        psi1,
        psi2,
        a_matrix,
        gram,
        gram_eigenvalues,
        gram_eigenvectors,
        base_state: base.initial().clone(),
        base_endpoint: base.endpoint().clone(),
    })
}

/// `Psi_1` and `Psi_2` only.
pub fn psi_split<T: Real>(solver: &Solver<T>, base: &Trajectory<T>) -> Result<TangentOperators<T>> {
    assemble(solver, base, Assembly::Split)
}

/// All operators including `A`, `G` and the eigendecomposition of `G`.
pub fn assemble_gram<T: Real>(
    solver: &Solver<T>,
    base: &Trajectory<T>,
) -> Result<TangentOperators<T>> {
    assemble(solver, base, Assembly::Full)
}

fn sorted_eigen<T: Real>(m: &DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (c, &i) in idx.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Solves `(G + gamma I) x = f` by Cholesky.
pub fn regularized_solve<T: Real>(
    gram: &DMatrix<T>,
    gamma: T,
    f: &DVector<T>,
) -> Result<DVector<T>> {
    if !(gamma > T::zero()) {
        return Err(Error::invalid("gamma must be positive"));
    }
    Error::check_dim(gram.nrows(), f.len())?;
    let mut m = gram.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += gamma;
    }
    let chol = Cholesky::new(m)
        .ok_or_else(|| Error::NumericDomain("G + gamma I is not positive definite".into()))?;
    Ok(chol.solve(f))
}

/// `||G (G + gamma I)^{-1} f - f|| / ||f||` for each `gamma`.
pub fn gram_limit_check<T: Real>(
    ops: &TangentOperators<T>,
    f: &SpectralField<T>,
    gammas: &[T],
) -> Result<Vec<T>> {
    Error::check_dim(ops.dim(), f.len())?;
    let fnorm = f.norm();
    if fnorm == T::zero() {
        return Err(Error::invalid("gram limit check needs f != 0"));
    }
    gammas
        .iter()
        .map(|&g| {
            let x = regularized_solve(&ops.gram, g, &f.coeffs)?;
            Ok((&ops.gram * x - &f.coeffs).norm() / fnorm)
        })
        .collect()
}

/// Singular values of `Psi_2`, descending.
#[derive(Clone, Debug, PartialEq)]
pub struct CompactnessReport<T> {
    pub singular_values: Vec<T>,
}

impl<T: Real> CompactnessReport<T> {
    /// `min { j : sigma_j <= eps }` (1-based), or `None` when no value is that small.
    pub fn tail_index(&self, eps: T) -> Option<usize> {
        self.singular_values
            .iter()
            .position(|s| *s <= eps)
            .map(|j| j + 1)
    }
}

pub fn compactness_diagnostic<T: Real>(ops: &TangentOperators<T>) -> CompactnessReport<T> {
    CompactnessReport {
        singular_values: descending_singular_values(&ops.psi2),
    }
}

pub(crate) fn descending_singular_values<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<T> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

/// Spectral norm of a dense matrix.
pub fn operator_norm<T: Real>(m: &DMatrix<T>) -> T {
    descending_singular_values(m)
        .first()
        .copied()
        .unwrap_or_else(T::zero)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{DomainSpec, StokesBasis};
    use crate::dynamics::SolverConfig;

    fn solver(mx: usize, ny: usize) -> Solver<f64> {
        let basis = StokesBasis::new(DomainSpec::new(4.0, 0.1, 0.0, mx, ny).unwrap()).unwrap();
        Solver::new(basis, SolverConfig::with_dt(0.01).recording(true)).unwrap()
    }

    #[test]
    fn zero_base_gives_pure_semigroup() {
        let s = solver(2, 2);
        let k = s.basis().dim();
        let base = s.flow(&s.basis().zeros(), &KickPath::zeros(1, k)).unwrap();
        let ops = assemble_gram(&s, &base).unwrap();
        assert_eq!(ops.psi2.norm(), 0.0);
        assert!(compactness_diagnostic(&ops)
            .singular_values
            .iter()
            .all(|v| *v == 0.0));
        for j in 0..k {
            let r = 0.1 * s.basis().eigenvalue(j);
            let expect = -(-r).exp_m1() / r;
            assert!((ops.a_matrix[(j, j)] - expect).abs() < 1e-12);
        }
        let w = SpectralField::unit(1, k);
        let tw = tangent_apply(&s, &base, &w).unwrap();
        assert!((tw[1] - ops.psi1[1]).abs() < 1e-12);
        assert_eq!(
            tangent_apply(&s, &base, &s.basis().zeros()).unwrap().norm(),
            0.0
        );
    }

    #[test]
    fn unrecorded_base_is_rejected() {
        let s = solver(2, 2);
        let k = s.basis().dim();
        let base = s
            .recording(false)
            .flow(&s.basis().zeros(), &KickPath::zeros(1, k))
            .unwrap();
        assert!(matches!(psi_split(&s, &base), Err(Error::InvalidState(_))));
    }

    #[test]
    fn tail_index_is_one_based() {
        let r = CompactnessReport {
            singular_values: vec![1.0, 0.5, 0.01, 0.0],
        };
        assert_eq!(r.tail_index(0.1), Some(3));
        assert_eq!(r.tail_index(2.0), Some(1));
        assert_eq!(r.tail_index(-1.0), None);
    }

    #[test]
    fn regularized_solve_needs_positive_gamma() {
        let g = DMatrix::<f64>::identity(3, 3);
        let f = DVector::from_element(3, 1.0);
        assert!(regularized_solve(&g, 0.0, &f).is_err());
        let x = regularized_solve(&g, 1.0, &f).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15);
    }
}
