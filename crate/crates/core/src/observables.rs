//! Derived quantities of a state: photon statistics, number squeezing,
//! `g2(0)`, Fock fidelity, Husimi `Q`.

use std::io::Write;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::fockspace::DensityMatrix;
use crate::scalar::{ln_factorial_table, Real};

/// Negative diagonal entries no larger than this (in magnitude) are treated
/// as roundoff and clipped to zero; larger violations are left visible.
pub const DIAGONAL_CLIP: f64 = 1e-10;

/// Raw photon-number distribution `p_n = rho_nn`.
///
/// Entries in `[-1e-10, 0)` are clipped to zero; anything more negative is
/// kept as-is (it signals an invalid state). No renormalization.
pub fn photon_distribution<T: Real>(rho: &DensityMatrix<T>) -> Vec<T> {
    let clip = T::of(DIAGONAL_CLIP);
    rho.diagonal()
        .into_iter()
        .map(|p| if p < T::zero() && p >= -clip { T::zero() } else { p })
        .collect()
}

/// Mean and variance of a photon-number distribution.
///
/// The variance is accumulated as `sum (n - mean)^2 p_n` (two passes), which
/// stays nonnegative where the naive `<n^2> - <n>^2` would cancel.
pub fn mean_var_of_distribution<T: Real>(probs: &[T]) -> (T, T) {
    let mut mean = T::zero();
    for (n, &p) in probs.iter().enumerate() {
        mean += T::of(n as f64) * p;
    }
    let mut var = T::zero();
    for (n, &p) in probs.iter().enumerate() {
        let d = T::of(n as f64) - mean;
        var += d * d * p;
    }
    (mean, var)
}

/// `g2(0) = sum n(n-1) p_n / (sum n p_n)^2` of a distribution.
pub fn g2_of_distribution<T: Real>(probs: &[T]) -> Result<T> {
    let mut mean = T::zero();
    let mut pairs = T::zero();
    for (n, &p) in probs.iter().enumerate() {
        let nf = T::of(n as f64);
        mean += nf * p;
        pairs += nf * (nf - T::one()) * p;
    }
    if mean <= T::zero() {
        return Err(Error::UndefinedObservable { what: "g2(0) of vacuum" });
    }
    Ok(pairs / (mean * mean))
}

/// Photon-number mean and variance of a state.
pub fn mean_var<T: Real>(rho: &DensityMatrix<T>) -> (T, T) {
    mean_var_of_distribution(&photon_distribution(rho))
}

/// Number squeezing in dB, `10 log10(variance / mean)`. Negative values are
/// sub-Poissonian; a Fock state gives `-inf`.
pub fn squeezing_db<T: Real>(rho: &DensityMatrix<T>) -> Result<T> {
    let (mean, var) = mean_var(rho);
    squeezing_db_from_moments(mean, var)
}

/// Squeezing in dB from precomputed moments.
pub fn squeezing_db_from_moments<T: Real>(mean: T, var: T) -> Result<T> {
    if mean <= T::zero() {
        return Err(Error::UndefinedObservable { what: "squeezing of vacuum" });
    }
    if var <= T::zero() {
        return Ok(T::neg_infinity());
    }
    Ok(T::of(10.0) * (var / mean).log10())
}

/// Second-order intensity correlation at zero delay.
pub fn g2_zero<T: Real>(rho: &DensityMatrix<T>) -> Result<T> {
    g2_of_distribution(&photon_distribution(rho))
}

/// Population of the Fock state `|n0>`. A target outside the truncated basis
/// has no overlap and returns zero.
pub fn fidelity_fock<T: Real>(rho: &DensityMatrix<T>, n0: usize) -> T {
    if n0 >= rho.dim() {
        return T::zero();
    }
    rho.entry(n0, n0).re
}

/// Rectangular grid in the coherent-state `alpha` plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaGrid<T> {
    pub re_min: T,
    pub re_max: T,
    pub im_min: T,
    pub im_max: T,
    pub re_count: usize,
    pub im_count: usize,
}

impl<T: Real> AlphaGrid<T> {
    /// Square grid centered on the origin with half-width `radius`.
    pub fn centered(radius: T, count: usize) -> Self {
        AlphaGrid {
            re_min: -radius,
            re_max: radius,
            im_min: -radius,
            im_max: radius,
            re_count: count,
            im_count: count,
        }
    }

    pub fn cell_area(&self) -> T {
        let dre = (self.re_max - self.re_min) / T::of((self.re_count - 1) as f64);
        let dim = (self.im_max - self.im_min) / T::of((self.im_count - 1) as f64);
        dre * dim
    }
}

/// Husimi function `Q(alpha) = <alpha| rho |alpha> / pi` sampled on a grid.
/// Values have units of inverse area in the `alpha` plane and integrate to
/// one when the grid captures the state.
#[derive(Debug, Clone)]
pub struct HusimiGrid<T: Real> {
    pub grid: AlphaGrid<T>,
    /// `values[[i, j]] = Q(re_i + i im_j)`, row = Re index.
    pub values: Array2<T>,
    /// Set when the grid radius is below the `sqrt(mean) + 5 var^{1/4}`
    /// coverage heuristic.
    pub coverage_warning: bool,
}

impl<T: Real> HusimiGrid<T> {
    /// Riemann sum `sum Q dA`; close to one on adequate grids.
    pub fn integral(&self) -> T {
        self.values.iter().copied().sum::<T>() * self.grid.cell_area()
    }

    /// CSV matrix with a 2-line header giving extents and counts.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# re_min={:e} re_max={:e} im_min={:e} im_max={:e}",
            self.grid.re_min.to_f64().unwrap(),
            self.grid.re_max.to_f64().unwrap(),
            self.grid.im_min.to_f64().unwrap(),
            self.grid.im_max.to_f64().unwrap()
        )?;
        writeln!(w, "# re_count={} im_count={}", self.grid.re_count, self.grid.im_count)?;
        for i in 0..self.grid.re_count {
            let mut line = String::new();
            for j in 0..self.grid.im_count {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{:e}", self.values[[i, j]].to_f64().unwrap()));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Evaluate the Husimi function of a state on `grid`.
///
/// Coherent overlaps are built in log space,
/// `ln c_n = -|alpha|^2/2 + n ln|alpha| - ln(n!)/2` with phase `n arg(alpha)`,
/// so large grids and photon numbers cannot overflow. The truncation error
/// is bounded by the state's tail mass beyond the basis.
pub fn husimi<T: Real>(rho: &DensityMatrix<T>, grid: &AlphaGrid<T>) -> HusimiGrid<T> {
    let dim = rho.dim();
    let (mean, var) = mean_var(rho);
    let needed_radius = mean.max(T::zero()).sqrt()
        + T::of(5.0) * var.max(T::zero()).sqrt().sqrt();
    let radius = grid
        .re_max
        .abs()
        .max(grid.re_min.abs())
        .max(grid.im_max.abs())
        .max(grid.im_min.abs());
    let coverage_warning = radius < needed_radius;

    let ln_fact = ln_factorial_table::<T>(dim - 1);
    let mut values = Array2::zeros((grid.re_count, grid.im_count));
    let dre = (grid.re_max - grid.re_min) / T::of((grid.re_count - 1) as f64);
    let dimag = (grid.im_max - grid.im_min) / T::of((grid.im_count - 1) as f64);
    let mut overlap = vec![num_complex::Complex::new(T::zero(), T::zero()); dim];

    for i in 0..grid.re_count {
        let are = grid.re_min + dre * T::of(i as f64);
        for j in 0..grid.im_count {
            let aim = grid.im_min + dimag * T::of(j as f64);
            let norm_sq = are * are + aim * aim;
            if norm_sq == T::zero() {
                // alpha = 0: overlap is the vacuum projector.
                values[[i, j]] = rho.entry(0, 0).re / T::PI();
                continue;
            }
            let ln_abs = norm_sq.ln() * T::half();
            let arg = aim.atan2(are);
            for (n, slot) in overlap.iter_mut().enumerate() {
                let nf = T::of(n as f64);
                let ln_mag = -norm_sq * T::half() + nf * ln_abs - ln_fact[n] * T::half();
                let mag = ln_mag.exp();
                let phi = nf * arg;
                *slot = num_complex::Complex::new(mag * phi.cos(), mag * phi.sin());
            }
            // <alpha| rho |alpha> = sum_mn conj(c_m) rho_mn c_n
            let mut acc = num_complex::Complex::new(T::zero(), T::zero());
            for m in 0..dim {
                let cm = overlap[m].conj();
                for (n, &cn) in overlap.iter().enumerate() {
                    acc += cm * rho.entry(m, n) * cn;
                }
            }
            values[[i, j]] = acc.re / T::PI();
        }
    }
    HusimiGrid { grid: *grid, values, coverage_warning }
}
