//! Frequency-dependent incoupling functions `K_c(omega)` and the loss
//! function `K_l(omega)` they generate.
//!
//! `K_l(omega) = i/(2 pi) * Int |K_c(w')|^2 / (omega - w' + i eta) dw'`,
//! so `Re K_l = |K_c(omega)|^2 / 2` and `Im K_l` is a principal-value
//! integral (a Kramers-Kronig pair). An independent background reservoir
//! adds `kappa_i` to the real part. The analytic real part is used by the
//! dynamics; the full numerical integral is kept as a cross-check
//! ([`k_l_numeric`]).

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{cr, Real, C};

/// Relative accuracy budget for the principal-value evaluation of `K_l`.
pub const PV_REL_BUDGET: f64 = 1e-3;

/// Sampled `|K_c(omega)|^2` from an external electromagnetic simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCoupling<T> {
    omegas: Vec<T>,
    kc2: Vec<T>,
}

impl<T: Real> TabulatedCoupling<T> {
    /// Build from raw samples; `omegas` must be strictly increasing.
    pub fn new(omegas: Vec<T>, kc2: Vec<T>) -> Result<Self> {
        if omegas.len() != kc2.len() {
            return Err(Error::DimensionMismatch {
                expected: omegas.len(),
                got: kc2.len(),
            });
        }
        if omegas.len() < 2 {
            return Err(Error::Config("tabulated coupling needs at least 2 samples".into()));
        }
        for w in omegas.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config("tabulated omegas must be strictly increasing".into()));
            }
        }
        if kc2.iter().any(|&v| v < T::zero()) {
            return Err(Error::Config("tabulated |K_c|^2 must be nonnegative".into()));
        }
        Ok(TabulatedCoupling { omegas, kc2 })
    }

    /// Read the two-column text format: header line `# omega_eV kc2_eV`,
    /// then one `omega kc2` pair per line, strictly increasing omega.
    pub fn from_reader<R: Read>(reader: R, path: &str) -> Result<Self> {
        let mut omegas = Vec::new();
        let mut kc2 = Vec::new();
        let mut lines = BufReader::new(reader).lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => line?,
            None => {
                return Err(Error::Parse {
                    path: path.into(),
                    line: 1,
                    detail: "empty file".into(),
                })
            }
        };
        if header.trim() != "# omega_eV kc2_eV" {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                detail: format!("expected header `# omega_eV kc2_eV`, found `{}`", header.trim()),
            });
        }
        for (idx, line) in lines {
            let line = line?;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let mut cols = text.split_whitespace();
            let parse = |s: Option<&str>| -> std::result::Result<T, String> {
                let s = s.ok_or("missing column")?;
                s.parse::<f64>()
                    .map(T::of)
                    .map_err(|e| format!("bad number `{s}`: {e}"))
            };
            let w = parse(cols.next()).map_err(|detail| Error::Parse {
                path: path.into(),
                line: idx + 1,
                detail,
            })?;
            let v = parse(cols.next()).map_err(|detail| Error::Parse {
                path: path.into(),
                line: idx + 1,
                detail,
            })?;
            omegas.push(w);
            kc2.push(v);
        }
        TabulatedCoupling::new(omegas, kc2)
    }

    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let display = path.as_ref().display().to_string();
        let file = std::fs::File::open(path.as_ref())?;
        Self::from_reader(file, &display)
    }

    /// Linear interpolation of `|K_c|^2`; clamps to the boundary samples
    /// outside the tabulated range.
    pub fn kc2_at(&self, omega: T) -> T {
        let n = self.omegas.len();
        if omega <= self.omegas[0] {
            return self.kc2[0];
        }
        if omega >= self.omegas[n - 1] {
            return self.kc2[n - 1];
        }
        let mut lo = 0;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.omegas[mid] <= omega {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = (omega - self.omegas[lo]) / (self.omegas[hi] - self.omegas[lo]);
        self.kc2[lo] + (self.kc2[hi] - self.kc2[lo]) * t
    }

    pub fn omega_range(&self) -> (T, T) {
        (self.omegas[0], *self.omegas.last().unwrap())
    }
}

/// Coupling family between the resonator and its radiation reservoir(s).
/// Rates are in energy units (eV); all are amplitude-decay-like rates, the
/// energy decay rate of Fock `|n>` population is `2 n kappa(n)`.
#[derive(Debug, Clone, PartialEq)]
pub enum CouplingModel<T: Real> {
    /// Textbook Markovian limit, `K_c = sqrt(2 kappa)`.
    Constant { kappa: T },
    /// Direct leakage interfering with a mirror round trip of inverse
    /// duration `gamma`; `theta` is a fixed phase offset, `kappa_i` a
    /// background (non-radiative) rate.
    TerminatedWaveguide { kappa: T, gamma: T, theta: T, kappa_i: T },
    /// High-Q resonator leaking through a low-Q resonator of linewidth
    /// `gamma` at `omega_d`; the lineshape has an exact zero at `omega_d`.
    FanoTwoResonator { kappa: T, gamma: T, omega_d: T, kappa_i: T },
    /// Direct specification of `Re K_l = kappa_i + c2 (omega - omega0)^2`,
    /// the near-minimum expansion every loss function obeys (no linear term:
    /// loss is nonnegative). Reference model for quantitative runs.
    QuadraticLoss { omega0: T, c2: T, kappa_i: T },
    /// Sampled `|K_c|^2` on a frequency grid.
    Tabulated(TabulatedCoupling<T>),
}

impl<T: Real> CouplingModel<T> {
    fn name(&self) -> &'static str {
        match self {
            CouplingModel::Constant { .. } => "Constant",
            CouplingModel::TerminatedWaveguide { .. } => "TerminatedWaveguide",
            CouplingModel::FanoTwoResonator { .. } => "FanoTwoResonator",
            CouplingModel::QuadraticLoss { .. } => "QuadraticLoss",
            CouplingModel::Tabulated(_) => "Tabulated",
        }
    }

    /// Background rate entering `Re K_l` additively (independent reservoir).
    pub fn background_rate(&self) -> T {
        match *self {
            CouplingModel::Constant { .. } | CouplingModel::Tabulated(_) => T::zero(),
            CouplingModel::TerminatedWaveguide { kappa_i, .. }
            | CouplingModel::FanoTwoResonator { kappa_i, .. }
            | CouplingModel::QuadraticLoss { kappa_i, .. } => kappa_i,
        }
    }
}

/// Frequency grid with a regularization `eta` for the principal-value
/// integral. When `eta` is `None` it defaults to `1e-3 *` grid spacing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid<T> {
    pub omega_min: T,
    pub omega_max: T,
    pub count: usize,
    pub eta: Option<T>,
}

impl<T: Real> FrequencyGrid<T> {
    pub fn new(omega_min: T, omega_max: T, count: usize) -> Self {
        assert!(count >= 2, "grid needs at least 2 points");
        assert!(omega_max > omega_min, "grid needs omega_max > omega_min");
        FrequencyGrid { omega_min, omega_max, count, eta: None }
    }

    pub fn spacing(&self) -> T {
        (self.omega_max - self.omega_min) / T::of((self.count - 1) as f64)
    }

    fn eta_value(&self) -> T {
        match self.eta {
            Some(eta) => {
                assert!(eta > T::zero(), "eta must be positive");
                eta
            }
            None => T::of(1e-3) * self.spacing(),
        }
    }
}

/// Incoupling amplitude `K_c(omega)`.
///
/// Not defined for [`CouplingModel::QuadraticLoss`], which specifies the
/// loss function directly.
pub fn k_c<T: Real>(model: &CouplingModel<T>, omega: T) -> Result<C<T>> {
    match *model {
        CouplingModel::Constant { kappa } => Ok(cr((T::two() * kappa).sqrt())),
        CouplingModel::TerminatedWaveguide { kappa, gamma, theta, .. } => {
            let phi = omega / gamma + theta;
            let root = cr((T::two() * kappa).sqrt());
            Ok(root * (cr(T::one()) - Complex::new(phi.cos(), phi.sin())))
        }
        CouplingModel::FanoTwoResonator { kappa, gamma, omega_d, .. } => {
            let root = cr((T::two() * kappa).sqrt());
            let num = cr(omega - omega_d);
            let den = Complex::new(omega - omega_d, gamma);
            Ok(root * num / den)
        }
        CouplingModel::QuadraticLoss { .. } => Err(Error::UnsupportedModel {
            operation: "k_c",
            model: model.name(),
        }),
        CouplingModel::Tabulated(ref tab) => Ok(cr(tab.kc2_at(omega).sqrt())),
    }
}

/// Analytic real part of the loss function, `|K_c(omega)|^2 / 2 + kappa_i`.
/// This is what the dissipator evaluates; it never needs a grid.
pub fn re_k_l<T: Real>(model: &CouplingModel<T>, omega: T) -> T {
    match *model {
        CouplingModel::Constant { kappa } => kappa,
        CouplingModel::TerminatedWaveguide { kappa, gamma, theta, kappa_i } => {
            let phi = omega / gamma + theta;
            T::two() * kappa * (T::one() - phi.cos()) + kappa_i
        }
        CouplingModel::FanoTwoResonator { kappa, gamma, omega_d, kappa_i } => {
            let d = omega - omega_d;
            kappa * d * d / (d * d + gamma * gamma) + kappa_i
        }
        CouplingModel::QuadraticLoss { omega0, c2, kappa_i } => {
            let d = omega - omega0;
            kappa_i + c2 * d * d
        }
        CouplingModel::Tabulated(ref tab) => tab.kc2_at(omega) * T::half(),
    }
}

/// Complete loss function `K_l(omega)`.
///
/// The real part is analytic ([`re_k_l`]); the imaginary (Lamb-shift) part
/// is the principal-value integral, computed with singularity subtraction on
/// the grid and Richardson extrapolation `eta -> 0`. Models without an
/// explicit `K_c` are fully analytic: `Constant` gives `kappa`, and
/// `QuadraticLoss` defines `Im K_l = 0` (any static shift is absorbed into
/// the resonator frequency).
pub fn k_l<T: Real>(model: &CouplingModel<T>, omega: T, grid: &FrequencyGrid<T>) -> Result<C<T>> {
    match model {
        CouplingModel::Constant { kappa } => Ok(cr(*kappa)),
        CouplingModel::QuadraticLoss { .. } => Ok(cr(re_k_l(model, omega))),
        _ => {
            let full = kk_integral(model, omega, grid)?;
            Ok(Complex::new(re_k_l(model, omega), full.im))
        }
    }
}

/// Loss function with *both* parts from the numerical Kramers-Kronig
/// integral. Used to cross-validate the analytic real part; agreement of
/// `Re` with `|K_c|^2/2 + kappa_i` is the consistency check of the pair.
pub fn k_l_numeric<T: Real>(
    model: &CouplingModel<T>,
    omega: T,
    grid: &FrequencyGrid<T>,
) -> Result<C<T>> {
    match model {
        CouplingModel::Constant { kappa } => Ok(cr(*kappa)),
        CouplingModel::QuadraticLoss { .. } => Ok(cr(re_k_l(model, omega))),
        _ => kk_integral(model, omega, grid),
    }
}

/// `i/(2 pi) Int |K_c|^2 / (omega - w' + i eta) dw'` over the grid, with the
/// singular kernel handled by subtracting `|K_c(omega)|^2` (whose integral
/// against the kernel is a closed-form complex logarithm) and extrapolating
/// `eta -> 0` from `eta` and `eta/2`. The background rate is added to the
/// real part afterwards.
fn kk_integral<T: Real>(
    model: &CouplingModel<T>,
    omega: T,
    grid: &FrequencyGrid<T>,
) -> Result<C<T>> {
    if omega <= grid.omega_min || omega >= grid.omega_max {
        return Err(Error::Config(format!(
            "k_l evaluation point {} outside the open grid interval ({}, {})",
            omega.to_f64().unwrap_or(f64::NAN),
            grid.omega_min.to_f64().unwrap_or(f64::NAN),
            grid.omega_max.to_f64().unwrap_or(f64::NAN),
        )));
    }
    let n = grid.count;
    let dw = grid.spacing();
    let f_at = |w: T| -> Result<T> { Ok(k_c(model, w)?.norm_sqr()) };
    let f0 = f_at(omega)?;

    let mut nodes: Vec<(T, T)> = Vec::with_capacity(n);
    for j in 0..n {
        let w = grid.omega_min + dw * T::of(j as f64);
        nodes.push((w, f_at(w)?));
    }

    let quad = |eta: T, stride: usize| -> C<T> {
        // Trapezoid over the subtracted integrand.
        let mut acc = Complex::new(T::zero(), T::zero());
        let count = (n - 1) / stride + 1;
        let h = dw * T::of(stride as f64);
        for idx in 0..count {
            let j = idx * stride;
            let (w, f) = nodes[j];
            let kern = Complex::new(omega - w, eta);
            let term = cr(f - f0) / kern;
            let weight = if idx == 0 || idx == count - 1 { T::half() } else { T::one() };
            acc += term.scale(weight * h);
        }
        // Exact integral of the subtracted constant against the kernel.
        let lo = Complex::new(omega - grid.omega_min, eta);
        let hi = Complex::new(omega - grid.omega_max, eta);
        let analytic = cr(f0) * (lo.ln() - hi.ln());
        let two_pi = T::two() * T::PI();
        (acc + analytic) * Complex::new(T::zero(), T::one() / two_pi)
    };

    let eta = grid.eta_value();
    let k_eta = quad(eta, 1);
    let k_eta2 = quad(eta * T::half(), 1);
    let extrap = k_eta2.scale(T::two()) - k_eta;

    // Error estimate: eta extrapolation residual plus a grid-refinement
    // residual (full vs every-other-node quadrature).
    let mut est = (k_eta2 - k_eta).norm();
    if n >= 5 {
        let coarse = quad(eta, 2);
        est += (k_eta - coarse).norm() / T::of(3.0);
    }
    let scale = extrap.norm().max(model.background_rate());
    let budget = T::of(PV_REL_BUDGET);
    if est > budget * scale {
        return Err(Error::Accuracy {
            context: "k_l principal-value integral",
            estimate: (est / scale.max(T::min_positive_value())).to_f64().unwrap_or(f64::NAN),
            budget: PV_REL_BUDGET,
        });
    }
    Ok(extrap + cr(model.background_rate()))
}

/// Closed-form imaginary part of `K_l` for models whose Kramers-Kronig
/// integral over an unbounded reservoir is known:
///
/// * `Constant`, `QuadraticLoss` - zero (flat reservoir / shift absorbed
///   into the resonator frequency),
/// * `TerminatedWaveguide` - the Hilbert transform of `4k - 4k cos(w/g + t)`
///   is `-2 kappa sin(omega/gamma + theta)`,
/// * `FanoTwoResonator` - `-kappa gamma d / (d^2 + gamma^2)`, `d = omega - omega_d`.
///
/// `None` for tabulated couplings, whose shift would need the grid-based
/// integral.
pub fn im_k_l_analytic<T: Real>(model: &CouplingModel<T>, omega: T) -> Option<T> {
    match *model {
        CouplingModel::Constant { .. } | CouplingModel::QuadraticLoss { .. } => Some(T::zero()),
        CouplingModel::TerminatedWaveguide { kappa, gamma, theta, .. } => {
            Some(-T::two() * kappa * (omega / gamma + theta).sin())
        }
        CouplingModel::FanoTwoResonator { kappa, gamma, omega_d, .. } => {
            let d = omega - omega_d;
            Some(-kappa * gamma * d / (d * d + gamma * gamma))
        }
        CouplingModel::Tabulated(_) => None,
    }
}

/// Frequency-dependent quality factor, `Q^{-1}(omega) = 2 Re K_l / omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QFactor<T> {
    Finite(T),
    /// `Re K_l = 0`: a lossless (bound) point.
    Infinite,
}

pub fn q_factor<T: Real>(model: &CouplingModel<T>, omega: T) -> QFactor<T> {
    let re = re_k_l(model, omega);
    if re <= T::zero() {
        QFactor::Infinite
    } else {
        QFactor::Finite(omega / (T::two() * re))
    }
}

/// Loss rate at the `n -> n-1` transition, `kappa(n) = Re K_l(omega_{n,n-1})`
/// with `omega_{n,n-1} = omega_a (1 + 2 beta (n-1))`.
///
/// The energy decay rate of the Fock `|n>` population is `2 n kappa(n)`.
pub fn kappa_of_n<T: Real>(model: &CouplingModel<T>, omega_a: T, beta: T, n: usize) -> T {
    assert!(n >= 1, "kappa_of_n is defined for n >= 1");
    re_k_l(model, transition_frequency(omega_a, beta, n))
}

/// `omega_{n,n-1} = omega_a (1 + 2 beta (n-1))`, the energy cost of the
/// `n-1 -> n` step in a Kerr resonator.
pub fn transition_frequency<T: Real>(omega_a: T, beta: T, n: usize) -> T {
    omega_a * (T::one() + T::two() * beta * T::of((n - 1) as f64))
}
