//! Exact propagation of the undriven master equation.
//!
//! With the drive off, the generator is time-invariant and couples
//! `rho_{m,n}` only to `rho_{m+1,n+1}`: each diagonal `d = m - n` is an
//! independent bidiagonal chain. The propagator over a step is the dense
//! matrix exponential of each chain, computed once per distinct step size
//! and reused, so arbitrarily stiff loss spectra cost nothing extra.
//!
//! For Hermitian states the `d < 0` sectors are the conjugates of `d > 0`,
//! so only `d >= 0` is stored and the mirror is written by conjugation
//! (which also preserves Hermiticity exactly).

use std::collections::HashMap;

use ndarray::Array2;
use num_complex::Complex;

use crate::linalg::{expm, MatElem};
use crate::scalar::{Real, C};

/// Chain coefficients of every `d >= 0` sector of the undriven generator.
///
/// For sector `d`, position `j` holds `rho_{j+d, j}`:
/// `dx_j/dt = a_j x_j + b_j x_{j+1}` with
/// `a_j = -i (h_{j+d} - h_j) - ((j+d) K_{j+d} + j conj(K_j))` and
/// `b_j = sqrt((j+d+1)(j+1)) (K_{j+d+1} + conj(K_{j+1}))`,
/// where `K_n = K_l(omega_{n,n-1})` and `h_n` is the Hamiltonian diagonal.
pub struct SectorChains<T: Real> {
    dim: usize,
    diag: Vec<Vec<C<T>>>,
    off: Vec<Vec<C<T>>>,
}

impl<T: Real> SectorChains<T> {
    /// `kl[n]` is the loss function at the `n -> n-1` transition
    /// (`kl[0]` is unused), `hdiag[n]` the Hamiltonian diagonal.
    pub fn new(kl: &[C<T>], hdiag: &[T]) -> Self {
        let dim = hdiag.len();
        assert_eq!(kl.len(), dim, "need K_l at every transition");
        let mut diag = Vec::with_capacity(dim);
        let mut off = Vec::with_capacity(dim);
        for d in 0..dim {
            let len = dim - d;
            let mut a = Vec::with_capacity(len);
            let mut b = Vec::with_capacity(len.saturating_sub(1));
            for j in 0..len {
                let m = j + d;
                let n = j;
                let phase = Complex::new(T::zero(), -(hdiag[m] - hdiag[n]));
                let decay = kl[m].scale(T::of(m as f64)) + kl[n].conj().scale(T::of(n as f64));
                a.push(phase - decay);
                if j + 1 < len {
                    let w = (T::of((m + 1) as f64) * T::of((n + 1) as f64)).sqrt();
                    b.push((kl[m + 1] + kl[n + 1].conj()).scale(w));
                }
            }
            diag.push(a);
            off.push(b);
        }
        SectorChains { dim, diag, off }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Dense propagators `exp(A_d * dt)` for every sector.
    pub fn propagator(&self, dt: T) -> SectorPropagator<T> {
        let mut mats = Vec::with_capacity(self.dim);
        for d in 0..self.dim {
            let len = self.dim - d;
            let mut a: Array2<C<T>> = Array2::zeros((len, len));
            for j in 0..len {
                a[[j, j]] = self.diag[d][j].scale(dt);
                if j + 1 < len {
                    a[[j, j + 1]] = self.off[d][j].scale(dt);
                }
            }
            mats.push(expm(&a));
        }
        SectorPropagator { dim: self.dim, mats }
    }
}

/// Set of per-sector propagators for one step size.
pub struct SectorPropagator<T: Real> {
    dim: usize,
    mats: Vec<Array2<C<T>>>,
}

impl<T: Real> SectorPropagator<T> {
    /// Advance a Hermitian density matrix in place by one step.
    pub fn apply(&self, rho: &mut Array2<C<T>>) {
        let dim = self.dim;
        let mut x = Vec::with_capacity(dim);
        for d in 0..dim {
            let len = dim - d;
            x.clear();
            for j in 0..len {
                x.push(rho[[j + d, j]]);
            }
            let p = &self.mats[d];
            for j in 0..len {
                let mut acc = Complex::new(T::zero(), T::zero());
                // Upper-triangular propagator: population only flows downward.
                for k in j..len {
                    acc += p[[j, k]] * x[k];
                }
                rho[[j + d, j]] = acc;
                if d > 0 {
                    rho[[j, j + d]] = acc.conj();
                }
            }
        }
    }
}

/// Cache of sector propagators keyed by the bit pattern of the step size.
pub struct PropagatorCache<T: Real> {
    chains: SectorChains<T>,
    cache: HashMap<u64, SectorPropagator<T>>,
}

impl<T: Real> PropagatorCache<T> {
    pub fn new(chains: SectorChains<T>) -> Self {
        PropagatorCache { chains, cache: HashMap::new() }
    }

    pub fn step(&mut self, rho: &mut Array2<C<T>>, dt: T) {
        let key = dt.to_f64().unwrap().to_bits();
        if !self.cache.contains_key(&key) {
            // Nonuniform grids could accumulate arbitrarily many entries.
            if self.cache.len() >= 16 {
                self.cache.clear();
            }
            self.cache.insert(key, self.chains.propagator(dt));
        }
        self.cache[&key].apply(rho);
    }
}

/// Pure-death chain for the diagonal probabilities:
/// `dp_n/dt = -r_n p_n + r_{n+1} p_{n+1}` with `r_n = 2 n kappa(n)`.
/// Propagated by the real matrix exponential of the (column-stochastic
/// generator) chain, exact for any stiffness.
pub struct DeathChain<T: Real> {
    rates: Vec<T>,
    cache: HashMap<u64, Array2<T>>,
}

impl<T: Real> DeathChain<T> {
    /// `rates[n] = 2 n kappa(n)`, the population decay rate of `|n>`.
    pub fn new(rates: Vec<T>) -> Self {
        DeathChain { rates, cache: HashMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.rates.len()
    }

    fn propagator(&self, dt: T) -> Array2<T> {
        let n = self.rates.len();
        let mut a: Array2<T> = Array2::zeros((n, n));
        for j in 0..n {
            a[[j, j]] = -self.rates[j] * dt;
            if j + 1 < n {
                a[[j, j + 1]] = self.rates[j + 1] * dt;
            }
        }
        expm(&a)
    }

    /// Advance the probability vector in place by `dt`.
    pub fn step(&mut self, p: &mut [T], dt: T) {
        assert_eq!(p.len(), self.rates.len());
        let key = dt.to_f64().unwrap().to_bits();
        if !self.cache.contains_key(&key) {
            if self.cache.len() >= 16 {
                self.cache.clear();
            }
            self.cache.insert(key, self.propagator(dt));
        }
        let prop = &self.cache[&key];
        let n = p.len();
        let mut out = vec![T::zero(); n];
        for j in 0..n {
            let mut acc = T::zero();
            for k in j..n {
                acc += prop[[j, k]] * p[k];
            }
            out[j] = acc;
        }
        p.copy_from_slice(&out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cr;

    #[test]
    fn death_chain_matches_single_mode_decay() {
        // Two-level chain |1> -> |0> with rate r: p1(t) = e^{-r t}.
        let mut chain = DeathChain::new(vec![0.0f64, 0.35]);
        let mut p = vec![0.0, 1.0];
        chain.step(&mut p, 2.0);
        assert!((p[1] - (-0.7f64).exp()).abs() < 1e-13);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn death_chain_conserves_probability() {
        let rates: Vec<f64> = (0..40).map(|n| 2.0 * n as f64 * 1e-3 * ((n as f64) - 9.0).powi(2)).collect();
        let mut chain = DeathChain::new(rates);
        let mut p = crate::fockspace::poisson_pmf(20.0f64, 40);
        let total0: f64 = p.iter().sum();
        for _ in 0..5 {
            chain.step(&mut p, 500.0);
        }
        let total: f64 = p.iter().sum();
        assert!((total - total0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v > -1e-12));
    }

    #[test]
    fn sector_propagator_pure_phase_for_lossless_chain() {
        // No loss: sectors rotate with the Kerr phases and keep modulus.
        let dim = 6;
        let kl = vec![cr(0.0f64); dim];
        let hdiag: Vec<f64> = (0..dim).map(|n| 0.01 * (n * n.saturating_sub(1)) as f64).collect();
        let chains = SectorChains::new(&kl, &hdiag);
        let prop = chains.propagator(3.0);

        let mut rho: Array2<C<f64>> = Array2::zeros((dim, dim));
        rho[[0, 0]] = cr(0.5);
        rho[[3, 3]] = cr(0.5);
        rho[[0, 3]] = cr(0.3);
        rho[[3, 0]] = cr(0.3);

        prop.apply(&mut rho);
        let trace: f64 = (0..dim).map(|i| rho[[i, i]].re).sum();
        assert!((trace - 1.0).abs() < 1e-13);
        assert!((rho[[0, 3]].norm() - 0.3).abs() < 1e-13);
        // rho_{3,0} advanced by exp(-i (h_3 - h_0) t).
        let want = -(hdiag[3] - hdiag[0]) * 3.0;
        assert!((rho[[3, 0]].arg() - want).abs() < 1e-12);
        // Hermiticity mirrored exactly.
        assert_eq!(rho[[0, 3]], rho[[3, 0]].conj());
    }
}
