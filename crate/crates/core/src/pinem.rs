//! Electron energy-gain/loss spectra of a free electron probing the cavity
//! state (photon-induced near-field electron microscopy).
//!
//! The electron is a ladder of `2 k_max + 1` energy levels (`k > 0` = gain)
//! coupled to the cavity by the scattering operator
//! `S = exp(g a b^dag - g* a^dag b)`, where `b` lowers the electron index
//! with unit amplitude: an electron gain absorbs one cavity photon. `S` is
//! built by matrix exponential of the anti-Hermitian generator.
//!
//! The generator conserves `k + n`, so the joint space splits into sectors
//! of at most `2 k_max + 1` states; the exponential is taken densely on each
//! sector. With the electron prepared in the single level `k = 0`, the same
//! conservation law makes the spectrum insensitive to cavity coherences:
//! only the populations `p_n` enter. Both facts are checked against a
//! literal full-joint-space computation in the tests.

use std::io::Write;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::fockspace::DensityMatrix;
use crate::linalg::expm;
use crate::scalar::{Real, C};

/// Cavity tail mass allowed beyond `dim - k_max` before the electron ladder
/// truncation could bias the spectrum.
pub const PINEM_TAIL_TOL: f64 = 1e-8;

/// Electron energy-exchange probability table.
#[derive(Debug, Clone, PartialEq)]
pub struct PinemSpectrum<T: Real> {
    /// Electron-photon coupling.
    pub g: C<T>,
    /// Probabilities for `k = -k_max ..= k_max` (index `k + k_max`).
    pub probs: Vec<T>,
    pub k_max: usize,
}

impl<T: Real> PinemSpectrum<T> {
    pub fn k_values(&self) -> impl Iterator<Item = i64> + '_ {
        let k_max = self.k_max as i64;
        -k_max..=k_max
    }

    /// Probability of electron energy change `k` quanta.
    pub fn prob(&self, k: i64) -> T {
        let idx = k + self.k_max as i64;
        if idx < 0 || idx >= self.probs.len() as i64 {
            T::zero()
        } else {
            self.probs[idx as usize]
        }
    }

    pub fn total(&self) -> T {
        self.probs.iter().copied().sum()
    }

    /// CSV rows `k,P_k` with comment lines recording `g` and the state.
    pub fn write_csv<W: Write>(&self, mut w: W, state_descriptor: &str) -> std::io::Result<()> {
        writeln!(
            w,
            "# g_re={:e} g_im={:e}",
            self.g.re.to_f64().unwrap(),
            self.g.im.to_f64().unwrap()
        )?;
        writeln!(w, "# state={state_descriptor}")?;
        writeln!(w, "k,P_k")?;
        for (k, &p) in self.k_values().zip(&self.probs) {
            writeln!(w, "{},{:e}", k, p.to_f64().unwrap())?;
        }
        Ok(())
    }
}

/// Compute the electron energy-gain/loss spectrum of `rho` at coupling `g`.
///
/// Preconditions: the cavity tail mass beyond `dim - k_max` must be below
/// [`PINEM_TAIL_TOL`], so that `k_max` absorptions never see the truncation
/// boundary; otherwise the error names the required dimension.
pub fn pinem_spectrum<T: Real>(
    rho: &DensityMatrix<T>,
    g: C<T>,
    k_max: usize,
) -> Result<PinemSpectrum<T>> {
    let dim = rho.dim();
    let tol = T::of(PINEM_TAIL_TOL);
    let head_ok = dim > k_max && rho.tail_mass(dim - k_max) < tol;
    if !head_ok {
        // Smallest basis that would satisfy the precondition for this state.
        let mut n_star = dim;
        while n_star > 0 && rho.tail_mass(n_star - 1) < tol {
            n_star -= 1;
        }
        return Err(Error::Truncation { dim, required_dim: n_star + k_max });
    }

    let p = crate::observables::photon_distribution(rho);
    let mut probs = vec![T::zero(); 2 * k_max + 1];
    let ik_max = k_max as i64;
    for (m, &pm) in p.iter().enumerate() {
        if pm <= T::zero() {
            continue;
        }
        // Sector of conserved k + n = m: k from k_lo to k_hi, n = m - k.
        let im = m as i64;
        let k_lo = (-ik_max).max(im - (dim as i64 - 1));
        let k_hi = ik_max.min(im);
        let len = (k_hi - k_lo + 1) as usize;
        let j0 = (-k_lo) as usize; // index of (k = 0, n = m)

        let mut gen: Array2<C<T>> = Array2::zeros((len, len));
        for j in 0..len - 1 {
            // j -> j+1 raises k by one and annihilates one photon (n_j = m - k_j).
            let n_j = (im - (k_lo + j as i64)) as f64;
            let root = T::of(n_j).sqrt();
            gen[[j + 1, j]] = g.scale(root);
            gen[[j, j + 1]] = -g.conj().scale(root);
        }
        let s = expm(&gen);
        for j in 0..len {
            probs[(k_lo + j as i64 + ik_max) as usize] += pm * s[[j, j0]].norm_sqr();
        }
    }
    Ok(PinemSpectrum { g, probs, k_max })
}

/// Total-variation distance `1/2 sum_k |P_a(k) - P_b(k)|` between spectra on
/// the same `k` range.
pub fn discriminate<T: Real>(a: &PinemSpectrum<T>, b: &PinemSpectrum<T>) -> Result<T> {
    if a.k_max != b.k_max {
        return Err(Error::MismatchedRanges { a: a.k_max, b: b.k_max });
    }
    let sum: T = a
        .probs
        .iter()
        .zip(&b.probs)
        .map(|(&x, &y)| (x - y).abs())
        .sum();
    Ok(sum * T::half())
}
