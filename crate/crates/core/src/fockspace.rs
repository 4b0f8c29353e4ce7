//! States and operators on a truncated Fock basis `|0> .. |dim-1>`.
//!
//! Truncation convention: raising out of the basis drops the amplitude
//! (absorbing boundary). All simulated scenarios decay downward in photon
//! number and are run with tail mass below 1e-10 at the boundary, so the
//! boundary is never dynamically relevant.

use ndarray::Array2;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::eigvals_hermitian;
use crate::scalar::{ln_factorial_table, Real, C};

/// Default Poisson-tail tolerance used when constructing coherent states.
pub const DEFAULT_TAIL_TOL: f64 = 1e-10;

/// Positivity diagnostics switch from an exact eigensolve to a Gershgorin
/// bound above this dimension.
pub const EXACT_EIG_MAX_DIM: usize = 256;

/// Photon-number label of a Fock basis state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct FockLabel(pub usize);

/// Density matrix on the truncated Fock basis, row/column index = photon
/// number. Dimensionless entries, unit trace after preparation.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T: Real> {
    dim: usize,
    elems: Array2<C<T>>,
}

/// Which ladder operator to apply from the left in [`ladder_apply`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    /// `a`
    Lower,
    /// `a^dagger`
    Raise,
    /// `a^dagger a`
    Number,
}

/// Lowest eigenvalue of a state, either computed exactly or bounded from
/// below by the Gershgorin circle theorem (cheaper, conservative).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MinEigen<T> {
    Exact(T),
    GershgorinBound(T),
}

impl<T: Real> MinEigen<T> {
    pub fn value(&self) -> T {
        match *self {
            MinEigen::Exact(v) | MinEigen::GershgorinBound(v) => v,
        }
    }
}

/// Validity report for a density matrix.
#[derive(Debug, Clone, Copy)]
pub struct StateDiagnostics<T> {
    /// `max_{mn} |rho_mn - conj(rho_nm)|`
    pub hermiticity_defect: T,
    /// `|Tr rho - 1|`
    pub trace_defect: T,
    /// Most negative eigenvalue (or a lower bound on it).
    pub min_eigenvalue: MinEigen<T>,
}

impl<T: Real> DensityMatrix<T> {
    /// Wrap a matrix without validation. The caller is responsible for
    /// Hermiticity and trace; evolution routines use this internally.
    pub fn from_matrix_unchecked(elems: Array2<C<T>>) -> Self {
        let dim = elems.nrows();
        assert_eq!(dim, elems.ncols(), "density matrix must be square");
        DensityMatrix { dim, elems }
    }

    /// Diagonal (classical) state from a probability vector; entries are
    /// taken as given, no renormalization.
    pub fn from_diagonal(probs: &[T]) -> Self {
        let dim = probs.len();
        let mut elems = Array2::zeros((dim, dim));
        for (n, &p) in probs.iter().enumerate() {
            elems[[n, n]] = Complex::new(p, T::zero());
        }
        DensityMatrix { dim, elems }
    }

    /// Convex mixture of states of equal dimension.
    pub fn mixture(terms: &[(T, &DensityMatrix<T>)]) -> Result<Self> {
        let dim = terms
            .first()
            .map(|(_, s)| s.dim)
            .ok_or_else(|| Error::Config("mixture of zero states".into()))?;
        let mut elems = Array2::zeros((dim, dim));
        for (w, state) in terms {
            if state.dim != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: state.dim,
                });
            }
            for ((i, j), v) in state.elems.indexed_iter() {
                elems[[i, j]] += v.scale(*w);
            }
        }
        Ok(DensityMatrix { dim, elems })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &Array2<C<T>> {
        &self.elems
    }

    pub fn into_matrix(self) -> Array2<C<T>> {
        self.elems
    }

    pub fn entry(&self, m: usize, n: usize) -> C<T> {
        self.elems[[m, n]]
    }

    pub fn trace(&self) -> C<T> {
        self.elems.diag().iter().copied().sum()
    }

    /// Raw diagonal, real parts.
    pub fn diagonal(&self) -> Vec<T> {
        self.elems.diag().iter().map(|v| v.re).collect()
    }

    /// Total diagonal mass at photon numbers `>= n_from`.
    pub fn tail_mass(&self, n_from: usize) -> T {
        self.elems
            .diag()
            .iter()
            .skip(n_from)
            .map(|v| v.re)
            .sum()
    }
}

/// Poisson weights `pmf(n; mean)` for `n = 0..len-1`, computed outward from
/// the mode by ratio recurrences so nothing overflows for large means.
pub fn poisson_pmf<T: Real>(mean: T, len: usize) -> Vec<T> {
    let mut out = vec![T::zero(); len];
    if len == 0 {
        return out;
    }
    if mean <= T::zero() {
        out[0] = T::one();
        return out;
    }
    let mode = mean
        .floor()
        .to_usize()
        .unwrap_or(0)
        .min(len.saturating_sub(1));
    // ln pmf(mode) = -mean + mode*ln(mean) - ln(mode!)
    let ln_fact = ln_factorial_table::<T>(mode);
    let ln_mode = -mean + T::of(mode as f64) * mean.ln() - ln_fact[mode];
    out[mode] = ln_mode.exp();
    for n in (0..mode).rev() {
        // pmf(n) = pmf(n+1) * (n+1) / mean
        out[n] = out[n + 1] * T::of((n + 1) as f64) / mean;
    }
    for n in mode + 1..len {
        out[n] = out[n - 1] * mean / T::of(n as f64);
    }
    out
}

/// Smallest dimension `N` such that the Poisson tail `sum_{n>=N} pmf(n; mean_n)`
/// is below `tail_tol`.
pub fn truncation_dim<T: Real>(mean_n: T, tail_tol: T) -> usize {
    assert!(
        tail_tol > T::zero() && tail_tol < T::one(),
        "tail_tol must lie in (0, 1)"
    );
    if mean_n <= T::zero() {
        return 1;
    }
    let m = mean_n.to_f64().unwrap();
    // 12 sigma + margin puts the ignored remainder far below any realistic
    // tolerance (the 12-sigma Poisson tail is ~1e-31).
    let n_hi = (m + 12.0 * (m + 1.0).sqrt() + 30.0).ceil() as usize;
    let pmf = poisson_pmf(mean_n, n_hi + 1);
    // Suffix sums from the far end: after adding pmf[n], tail = tail(n);
    // the first n whose tail reaches the tolerance makes n + 1 the answer.
    let mut tail = T::zero();
    for n in (0..=n_hi).rev() {
        tail += pmf[n];
        if tail >= tail_tol {
            return n + 1;
        }
    }
    // Even tail(0) < tol: only possible for tolerances close to 1.
    1
}

/// Projector `|n><n|`.
pub fn fock_state<T: Real>(n: FockLabel, dim: usize) -> Result<DensityMatrix<T>> {
    if n.0 >= dim {
        return Err(Error::Dimension { index: n.0, dim });
    }
    let mut elems = Array2::zeros((dim, dim));
    elems[[n.0, n.0]] = Complex::new(T::one(), T::zero());
    Ok(DensityMatrix { dim, elems })
}

/// Coherent state `|alpha><alpha|` with `alpha = sqrt(mean_n) e^{i phase}`,
/// using the default tail tolerance to decide whether `dim` is sufficient.
pub fn coherent_state<T: Real>(mean_n: T, phase: T, dim: usize) -> Result<DensityMatrix<T>> {
    coherent_state_with_tail(mean_n, phase, dim, T::of(DEFAULT_TAIL_TOL))
}

/// Coherent state with an explicit tail tolerance.
///
/// Amplitudes are assembled in log space:
/// `rho_mn = exp(-mean + (m+n)/2 ln(mean) - (ln m! + ln n!)/2) e^{i(m-n)phase}`.
pub fn coherent_state_with_tail<T: Real>(
    mean_n: T,
    phase: T,
    dim: usize,
    tail_tol: T,
) -> Result<DensityMatrix<T>> {
    if mean_n < T::zero() {
        return Err(Error::Config("coherent state needs mean_n >= 0".into()));
    }
    let required = truncation_dim(mean_n, tail_tol);
    if dim < required {
        return Err(Error::Truncation {
            dim,
            required_dim: required,
        });
    }
    if mean_n == T::zero() {
        return fock_state(FockLabel(0), dim);
    }
    let ln_fact = ln_factorial_table::<T>(dim - 1);
    let ln_mean = mean_n.ln();
    let mut elems = Array2::zeros((dim, dim));
    for m in 0..dim {
        for n in 0..dim {
            let ln_mag = -mean_n + T::of((m + n) as f64) * ln_mean * T::half()
                - (ln_fact[m] + ln_fact[n]) * T::half();
            let mag = ln_mag.exp();
            let arg = T::of(m as f64 - n as f64) * phase;
            elems[[m, n]] = Complex::new(mag * arg.cos(), mag * arg.sin());
        }
    }
    Ok(DensityMatrix { dim, elems })
}

/// Apply a ladder operator from the left: `a rho`, `a^dagger rho`, or
/// `a^dagger a rho`, using `a|n> = sqrt(n)|n-1>`.
pub fn ladder_apply<T: Real>(which: Ladder, rho: &DensityMatrix<T>) -> Array2<C<T>> {
    let dim = rho.dim;
    let r = &rho.elems;
    let mut out = Array2::zeros((dim, dim));
    match which {
        Ladder::Lower => {
            for m in 0..dim.saturating_sub(1) {
                let f = T::of((m + 1) as f64).sqrt();
                for n in 0..dim {
                    out[[m, n]] = r[[m + 1, n]].scale(f);
                }
            }
        }
        Ladder::Raise => {
            // a^dagger maps |dim-1> out of the basis; that amplitude is
            // dropped (absorbing top boundary).
            for m in 1..dim {
                let f = T::of(m as f64).sqrt();
                for n in 0..dim {
                    out[[m, n]] = r[[m - 1, n]].scale(f);
                }
            }
        }
        Ladder::Number => {
            for m in 0..dim {
                let f = T::of(m as f64);
                for n in 0..dim {
                    out[[m, n]] = r[[m, n]].scale(f);
                }
            }
        }
    }
    out
}

/// Hermiticity, trace and positivity diagnostics.
///
/// Positivity uses the exact smallest eigenvalue up to
/// [`EXACT_EIG_MAX_DIM`]; beyond that a Gershgorin lower bound
/// `min_m (rho_mm - sum_{n != m} |rho_mn|)`.
pub fn validate<T: Real>(rho: &DensityMatrix<T>) -> StateDiagnostics<T> {
    let dim = rho.dim;
    let r = &rho.elems;
    let mut herm = T::zero();
    for m in 0..dim {
        for n in m..dim {
            let d = (r[[m, n]] - r[[n, m]].conj()).norm();
            if d > herm {
                herm = d;
            }
        }
    }
    let trace_defect = (rho.trace().re - T::one()).abs().max(rho.trace().im.abs());
    let min_eigenvalue = if dim <= EXACT_EIG_MAX_DIM {
        let vals = eigvals_hermitian(r);
        MinEigen::Exact(vals[0])
    } else {
        let mut best = T::infinity();
        for m in 0..dim {
            let mut radius = T::zero();
            for n in 0..dim {
                if n != m {
                    radius += r[[m, n]].norm();
                }
            }
            let low = r[[m, m]].re - radius;
            if low < best {
                best = low;
            }
        }
        MinEigen::GershgorinBound(best)
    };
    StateDiagnostics {
        hermiticity_defect: herm,
        trace_defect,
        min_eigenvalue,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fock_state_projectors() {
        let rho = fock_state::<f64>(FockLabel(0), 4).unwrap();
        assert_eq!(rho.diagonal(), vec![1.0, 0.0, 0.0, 0.0]);
        let rho = fock_state::<f64>(FockLabel(3), 4).unwrap();
        assert_eq!(rho.diagonal(), vec![0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            fock_state::<f64>(FockLabel(5), 4),
            Err(Error::Dimension { index: 5, dim: 4 })
        ));
    }

    #[test]
    fn truncation_dim_edge_cases() {
        assert_eq!(truncation_dim(0.0f64, 1e-10), 1);
        // Oracle: direct Poisson tail sums.
        let oracle = |mean: f64, tol: f64| -> usize {
            let hi = (mean + 14.0 * (mean + 1.0).sqrt() + 40.0) as usize;
            let pmf = poisson_pmf(mean, hi);
            for n_dim in (0..hi).rev() {
                let tail: f64 = pmf[n_dim..].iter().sum();
                if tail >= tol {
                    return n_dim + 1;
                }
            }
            1
        };
        for &(mean, tol) in &[(50.0, 1e-10), (10.0, 1e-6), (5.0, 1e-8), (0.3, 1e-4)] {
            assert_eq!(truncation_dim(mean, tol), oracle(mean, tol), "mean={mean}");
        }
    }

    #[test]
    fn coherent_state_is_poissonian() {
        let rho = coherent_state(5.0f64, 0.0, 64).unwrap();
        let tr = rho.trace();
        assert!((tr.re - 1.0).abs() < 1e-10);
        assert!(tr.im.abs() < 1e-14);
        // Diagonal equals the Poisson pmf elementwise.
        let pmf = poisson_pmf(5.0, 64);
        for (n, &p) in rho.diagonal().iter().enumerate() {
            assert!((p - pmf[n]).abs() < 1e-12, "n={n}");
        }
        // Mean and variance both equal 5.
        let mean: f64 = rho.diagonal().iter().enumerate().map(|(n, p)| n as f64 * p).sum();
        let second: f64 = rho
            .diagonal()
            .iter()
            .enumerate()
            .map(|(n, p)| (n as f64) * (n as f64) * p)
            .sum();
        assert!((mean - 5.0).abs() < 1e-8);
        assert!((second - mean * mean - 5.0).abs() < 1e-8);
    }

    #[test]
    fn coherent_state_reports_required_dim() {
        let needed = truncation_dim(50.0f64, 1e-10);
        match coherent_state(50.0f64, 0.0, 10) {
            Err(Error::Truncation { required_dim, .. }) => assert_eq!(required_dim, needed),
            other => panic!("expected truncation error, got {other:?}"),
        }
        assert!(coherent_state(50.0f64, 0.0, needed).is_ok());
    }

    #[test]
    fn coherent_zero_is_vacuum() {
        let rho = coherent_state(0.0f64, 0.3, 8).unwrap();
        let vac = fock_state(FockLabel(0), 8).unwrap();
        assert_eq!(rho, vac);
    }

    #[test]
    fn ladder_matrix_elements_exact() {
        // <m|a|n> = sqrt(n) delta_{m,n-1}, probed through a|n><n|.
        let dim = 6;
        for n in 0..dim {
            let rho = fock_state::<f64>(FockLabel(n), dim).unwrap();
            let arho = ladder_apply(Ladder::Lower, &rho);
            for m in 0..dim {
                let want = if n > 0 && m == n - 1 { (n as f64).sqrt() } else { 0.0 };
                assert_eq!(arho[[m, n]].re, want);
            }
        }
    }

    #[test]
    fn number_on_fock_scales_projector() {
        let rho = fock_state::<f64>(FockLabel(3), 5).unwrap();
        let nrho = ladder_apply(Ladder::Number, &rho);
        assert_eq!(nrho[[3, 3]].re, 3.0);
        assert_eq!(nrho[[2, 2]].re, 0.0);
    }

    #[test]
    fn lower_on_vacuum_is_zero() {
        let rho = fock_state::<f64>(FockLabel(0), 4).unwrap();
        let arho = ladder_apply(Ladder::Lower, &rho);
        assert!(arho.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn mean_of_coherent_via_number_op() {
        let rho = coherent_state(5.0f64, 0.7, 64).unwrap();
        let nrho = ladder_apply(Ladder::Number, &rho);
        let mean: f64 = (0..64).map(|i| nrho[[i, i]].re).sum();
        assert!((mean - 5.0).abs() < 1e-8);
    }

    #[test]
    fn validate_flags_defects() {
        let rho = coherent_state(3.0f64, 0.0, 32).unwrap();
        let d = validate(&rho);
        assert!(d.hermiticity_defect < 1e-10);
        assert!(d.trace_defect < 1e-10);
        assert!(d.min_eigenvalue.value() > -1e-10);

        // Broken Hermiticity is reported as |rho_01 - conj(rho_10)|.
        let mut m = rho.matrix().clone();
        m[[0, 1]] += C::<f64>::new(0.25, 0.0);
        let bad = DensityMatrix::from_matrix_unchecked(m);
        let d = validate(&bad);
        assert!((d.hermiticity_defect - 0.25).abs() < 1e-12);

        // diag(0.5, 0.6) has trace defect 0.1.
        let half = DensityMatrix::from_diagonal(&[0.5f64, 0.6]);
        let d = validate(&half);
        assert!((d.trace_defect - 0.1).abs() < 1e-12);
    }

    #[test]
    fn values_are_send_and_sync() {
        fn check<T: Send + Sync>() {}
        check::<DensityMatrix<f64>>();
        check::<StateDiagnostics<f64>>();
        check::<crate::coupling::CouplingModel<f64>>();
        check::<crate::dynamics::SimulationConfig<f64>>();
        check::<crate::dynamics::Trajectory<f64>>();
    }

    #[test]
    fn validate_uses_gershgorin_above_cutoff() {
        let rho = fock_state::<f64>(FockLabel(2), EXACT_EIG_MAX_DIM + 1).unwrap();
        let d = validate(&rho);
        assert!(matches!(d.min_eigenvalue, MinEigen::GershgorinBound(_)));
        assert!(d.min_eigenvalue.value() >= 0.0);
    }
}
