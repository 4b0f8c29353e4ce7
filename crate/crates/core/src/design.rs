//! Design rules for the n-photon bound state: which photon number a given
//! detuning stabilizes, the inverse solver, loss-versus-n curves, and a
//! coarse regime classification.

use std::io::Write;

use crate::coupling::{kappa_of_n, CouplingModel};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// A resonator design: Kerr strength, detuning of the loss minimum from the
/// linear resonance, background loss and loss curvature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignPoint<T> {
    /// Linear resonance frequency (eV).
    pub omega_a: T,
    /// Dimensionless Kerr coefficient.
    pub beta: T,
    /// `delta0 = omega0 - omega_a` (eV), the detuning of the loss zero.
    pub delta0: T,
    /// Background loss rate (eV).
    pub kappa_i: T,
    /// Loss curvature at the minimum (1/eV).
    pub c2: T,
}

impl<T: Real> DesignPoint<T> {
    /// The quadratic-loss coupling model this point describes.
    pub fn coupling(&self) -> CouplingModel<T> {
        CouplingModel::QuadraticLoss {
            omega0: self.omega_a + self.delta0,
            c2: self.c2,
            kappa_i: self.kappa_i,
        }
    }
}

/// Photon number stabilized by the loss zero:
/// `n0 = delta0 / (2 beta omega_a) + 1`.
///
/// This is the detuning at which the `n0 -> n0-1` transition frequency
/// `omega_a (1 + 2 beta (n0-1))` coincides with the loss zero `omega0`. The
/// `omega_a` factor makes the expression dimensionally consistent with
/// `delta0` carried in energy units.
pub fn stable_photon_number<T: Real>(p: &DesignPoint<T>) -> Result<T> {
    if p.beta <= T::zero() {
        return Err(Error::NoBicOrder);
    }
    Ok(p.delta0 / (T::two() * p.beta * p.omega_a) + T::one())
}

/// Detuning that places the loss zero on the `n0 -> n0-1` transition:
/// `delta0 = 2 beta omega_a (n0 - 1)`.
pub fn detuning_for_fock<T: Real>(n0: usize, omega_a: T, beta: T) -> T {
    T::two() * beta * omega_a * T::of((n0 - 1) as f64)
}

/// Loss-versus-photon-number table with its minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCurve<T> {
    /// `(n, kappa(n))` for `n = 1..=n_max`.
    pub entries: Vec<(usize, T)>,
    pub min_n: usize,
    pub min_kappa: T,
}

impl<T: Real> LossCurve<T> {
    /// CSV rows `n,kappa_n` (rates in eV).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,kappa_n")?;
        for &(n, k) in &self.entries {
            writeln!(w, "{},{:e}", n, k.to_f64().unwrap())?;
        }
        Ok(())
    }
}

/// Evaluate `kappa(n)` for `n = 1..=n_max` under `coupling`.
pub fn loss_curve<T: Real>(
    p: &DesignPoint<T>,
    coupling: &CouplingModel<T>,
    n_max: usize,
) -> LossCurve<T> {
    assert!(n_max >= 1, "loss curve needs n_max >= 1");
    let mut entries = Vec::with_capacity(n_max);
    let mut min_n = 1;
    let mut min_kappa = T::infinity();
    for n in 1..=n_max {
        let k = kappa_of_n(coupling, p.omega_a, p.beta, n);
        if k < min_kappa {
            min_kappa = k;
            min_n = n;
        }
        entries.push((n, k));
    }
    LossCurve { entries, min_n, min_kappa }
}

/// Operating regime of a design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Integer-tuned `n0` with enough loss contrast to trap a Fock state.
    FockCapable,
    /// Contrast is there but the loss zero sits between integers; the state
    /// decays past it into vacuum.
    FailedFock,
    /// Background loss dominates; the nonlinear loss looks linear.
    WashedOut,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::FockCapable => "fock_capable",
            Regime::FailedFock => "failed_fock",
            Regime::WashedOut => "washed_out",
        }
    }
}

/// Thresholds used by [`classify`]; the defaults are pragmatic and can be
/// overridden.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyThresholds<T> {
    /// `|n0 - round(n0)|` below this counts as integer-tuned.
    pub integrality: T,
    /// Minimum `kappa(n_probe) / kappa_i`.
    pub contrast: T,
    /// Contrast is probed at `n_probe = probe_factor * n0` — the scale a
    /// loading protocol populates (a few times the target), where the
    /// nonlinear loss must still dominate the background.
    pub probe_factor: T,
}

impl<T: Real> Default for ClassifyThresholds<T> {
    fn default() -> Self {
        ClassifyThresholds {
            integrality: T::of(1e-3),
            contrast: T::of(10.0),
            probe_factor: T::of(5.0),
        }
    }
}

/// Classify a design point with default thresholds.
pub fn classify<T: Real>(p: &DesignPoint<T>, coupling: &CouplingModel<T>) -> Result<Regime> {
    classify_with(p, coupling, &ClassifyThresholds::default())
}

/// Classify a design point: `FockCapable` needs an integer-tuned `n0` and
/// loss contrast `kappa(probe_factor * n0) / kappa_i` above threshold,
/// `FailedFock` has the contrast but a fractional `n0`, everything else is
/// `WashedOut`.
pub fn classify_with<T: Real>(
    p: &DesignPoint<T>,
    coupling: &CouplingModel<T>,
    thresholds: &ClassifyThresholds<T>,
) -> Result<Regime> {
    let n0 = stable_photon_number(p)?;
    let nearest = n0.round();
    let integral = (n0 - nearest).abs() < thresholds.integrality && nearest >= T::one();
    let probe = (n0.max(T::one()) * thresholds.probe_factor)
        .round()
        .to_usize()
        .unwrap_or(1)
        .max(2);
    let kappa_probe = kappa_of_n(coupling, p.omega_a, p.beta, probe);
    let kappa_i = coupling.background_rate();
    let contrast_ok = if kappa_i <= T::zero() {
        kappa_probe > T::zero()
    } else {
        kappa_probe / kappa_i > thresholds.contrast
    };
    Ok(if contrast_ok && integral {
        Regime::FockCapable
    } else if contrast_ok {
        Regime::FailedFock
    } else {
        Regime::WashedOut
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const OMEGA_A: f64 = 1.47;

    fn point(beta: f64, delta0: f64, kappa_i: f64) -> DesignPoint<f64> {
        // c2 = kappa / gamma^2 for the Fig. 2-style waveguide family.
        let c2 = 1e-3 * OMEGA_A / (1e-2 * OMEGA_A).powi(2);
        DesignPoint { omega_a: OMEGA_A, beta, delta0, kappa_i, c2 }
    }

    #[test]
    fn zero_detuning_gives_first_fock_state() {
        let p = point(5e-6, 0.0, 0.0);
        assert_eq!(stable_photon_number(&p).unwrap(), 1.0);
    }

    #[test]
    fn stable_photon_number_reference_points() {
        let p = point(5e-6, 9.0e-5 * OMEGA_A, 0.0);
        assert!((stable_photon_number(&p).unwrap() - 10.0).abs() < 1e-9);

        // delta0 = 0.043 gamma with gamma = 1e-2 omega_a.
        let p = point(5e-6, 4.3e-4 * OMEGA_A, 0.0);
        assert!((stable_photon_number(&p).unwrap() - 44.0).abs() < 1e-9);
    }

    #[test]
    fn beta_zero_has_no_bic_order() {
        let p = point(0.0, 1e-4, 0.0);
        assert!(matches!(stable_photon_number(&p), Err(Error::NoBicOrder)));
    }

    #[test]
    fn detuning_round_trip_is_exact() {
        for n0 in [1usize, 2, 10, 44, 60] {
            let d = detuning_for_fock(n0, OMEGA_A, 5e-6);
            let p = point(5e-6, d, 0.0);
            let back = stable_photon_number(&p).unwrap();
            assert_eq!(back, n0 as f64, "n0={n0}");
        }
        assert_eq!(detuning_for_fock(1, OMEGA_A, 5e-6), 0.0);
        let d10 = detuning_for_fock(10, OMEGA_A, 5e-6);
        assert!((d10 - 9e-5 * OMEGA_A).abs() < 1e-18);
    }

    #[test]
    fn monotonicity_in_detuning_and_beta() {
        let mut prev = 0.0;
        for k in 1..10 {
            let p = point(5e-6, k as f64 * 1e-5, 0.0);
            let n0 = stable_photon_number(&p).unwrap();
            assert!(n0 > prev);
            prev = n0;
        }
        let mut prev = f64::INFINITY;
        for k in 1..10 {
            let p = point(k as f64 * 1e-6, 1e-4, 0.0);
            let n0 = stable_photon_number(&p).unwrap();
            assert!(n0 < prev);
            prev = n0;
        }
    }

    #[test]
    fn loss_curve_minima() {
        let p = point(5e-6, detuning_for_fock(10, OMEGA_A, 5e-6), 0.0);
        let curve = loss_curve(&p, &p.coupling(), 60);
        assert_eq!(curve.min_n, 10);
        assert_eq!(curve.min_kappa, 0.0);

        let lossy = point(5e-6, detuning_for_fock(10, OMEGA_A, 5e-6), 1e-7 * OMEGA_A);
        let curve = loss_curve(&lossy, &lossy.coupling(), 60);
        assert_eq!(curve.min_n, 10);
        assert!((curve.min_kappa - 1e-7 * OMEGA_A).abs() < 1e-20);

        let flat = CouplingModel::Constant { kappa: 1e-3 };
        let curve = loss_curve(&p, &flat, 20);
        assert!(curve.entries.iter().all(|&(_, k)| k == 1e-3));
    }

    #[test]
    fn classify_reference_regimes() {
        // Fig. 3 lower panel: integer n0 = 10, kappa_i = 1e-7 omega_a. The
        // nonlinear loss still dominates at the photon numbers a loading
        // pulse reaches (about 5 n0), so the design is Fock-capable.
        let fig3 = point(5e-6, detuning_for_fock(10, OMEGA_A, 5e-6), 1e-7 * OMEGA_A);
        assert_eq!(classify(&fig3, &fig3.coupling()).unwrap(), Regime::FockCapable);

        // Strong background loss washes the nonlinearity out.
        let washed = point(5e-6, detuning_for_fock(10, OMEGA_A, 5e-6), 1e-3 * OMEGA_A);
        assert_eq!(classify(&washed, &washed.coupling()).unwrap(), Regime::WashedOut);

        // Fractional n0 = 10.5 with an ideal BIC: failed Fock state.
        let d = 2.0 * 5e-6 * OMEGA_A * 9.5;
        let failed = point(5e-6, d, 0.0);
        assert!((stable_photon_number(&failed).unwrap() - 10.5).abs() < 1e-9);
        assert_eq!(classify(&failed, &failed.coupling()).unwrap(), Regime::FailedFock);

        // Ideal integer BIC.
        let ideal = point(5e-6, detuning_for_fock(10, OMEGA_A, 5e-6), 0.0);
        assert_eq!(classify(&ideal, &ideal.coupling()).unwrap(), Regime::FockCapable);
    }
}
