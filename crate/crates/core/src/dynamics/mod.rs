//! Time evolution of the cavity state under the master equation with the
//! photon-number-dependent dissipator.
//!
//! Three integration paths, all sharing one observable pipeline:
//!
//! * [`evolve`] — full density matrix. Undriven evolutions use exact
//!   per-sector matrix-exponential propagators ([`chain`]); driven ones use
//!   the adaptive Runge-Kutta integrator ([`rk`]). The contract is the
//!   tolerance budget, not the method.
//! * [`evolve_diagonal`] — the pure-death chain of the diagonal, which
//!   closes on itself when the drive is off.
//! * [`moment_closure_evolve`] — two coupled moment ODEs for photon numbers
//!   far beyond what a truncated basis can hold.

pub mod chain;
pub mod rk;

use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex;

use crate::coupling::{im_k_l_analytic, re_k_l, transition_frequency, CouplingModel};
use crate::error::{Error, Result};
use crate::fockspace::{coherent_state, DensityMatrix};
use crate::observables::{
    g2_of_distribution, mean_var_of_distribution, photon_distribution, squeezing_db_from_moments,
};
use crate::scalar::{Real, C};
use crate::units::{fs_to_internal, internal_to_fs};

use chain::{DeathChain, PropagatorCache, SectorChains};
use rk::{integrate_adaptive, RkOptions};

/// Reference frame of the integration.
///
/// The dissipator couples `rho_{m,n}` only to `rho_{m+1,n+1}`, i.e. within
/// one `m - n` sector. Conjugation by `U = exp(i omega_a t a^dag a)`
/// multiplies `rho_{mn}` by `exp(i omega_a (m-n) t)` - the same factor for
/// `(m,n)` and `(m+1,n+1)` - so `U D[rho] U^dag = D[U rho U^dag]` exactly:
/// the frame change removes `omega_a a^dag a` from the Hamiltonian and
/// leaves the dissipator unchanged. The rotating frame is therefore exact
/// and is the default (optical phases over nanosecond horizons span ~1e8
/// cycles in the lab frame).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Frame {
    #[default]
    RotatingAtOmegaA,
    Lab,
}

/// Coherent drive `alpha(t) = amplitude * env(t) * exp(-i carrier t)`
/// entering the Hamiltonian as `alpha(t) a + h.c.`.
#[derive(Debug, Clone, PartialEq)]
pub enum DriveEnvelope<T: Real> {
    None,
    /// Gaussian envelope `exp(-4 ln2 (t - center)^2 / fwhm^2)`.
    GaussianPulse {
        amplitude_ev: C<T>,
        center_fs: T,
        fwhm_fs: T,
        carrier_ev: T,
    },
    /// Linear interpolation of sampled complex amplitudes; zero outside the
    /// sampled range.
    CustomSampled { times_fs: Vec<T>, values_ev: Vec<C<T>> },
}

impl<T: Real> DriveEnvelope<T> {
    pub fn is_none(&self) -> bool {
        matches!(self, DriveEnvelope::None)
    }
}

/// Physical and numerical parameters of one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig<T: Real> {
    /// Linear resonance frequency (eV).
    pub omega_a: T,
    /// Dimensionless Kerr coefficient.
    pub beta: T,
    pub coupling: CouplingModel<T>,
    pub drive: DriveEnvelope<T>,
    /// Fock-space truncation.
    pub dim: usize,
    pub frame: Frame,
    pub rel_tol: T,
    pub abs_tol: T,
    /// Allowed trace drift per unit internal time.
    pub trace_budget_per_time: T,
}

impl<T: Real> SimulationConfig<T> {
    pub fn new(omega_a: T, beta: T, coupling: CouplingModel<T>, dim: usize) -> Self {
        SimulationConfig {
            omega_a,
            beta,
            coupling,
            drive: DriveEnvelope::None,
            dim,
            frame: Frame::RotatingAtOmegaA,
            rel_tol: T::of(1e-10),
            abs_tol: T::of(1e-13),
            trace_budget_per_time: T::of(1e-9),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.omega_a <= T::zero() {
            return Err(Error::Config("omega_a must be positive".into()));
        }
        if self.beta < T::zero() {
            return Err(Error::Config("beta must be nonnegative".into()));
        }
        if self.dim < 2 {
            return Err(Error::Config("dim must be at least 2".into()));
        }
        if self.rel_tol <= T::zero() || self.abs_tol <= T::zero() || self.trace_budget_per_time <= T::zero() {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if let DriveEnvelope::GaussianPulse { fwhm_fs, .. } = self.drive {
            if fwhm_fs <= T::zero() {
                return Err(Error::Config("pulse duration must be positive".into()));
            }
        }
        if let DriveEnvelope::CustomSampled { times_fs, values_ev } = &self.drive {
            if times_fs.len() != values_ev.len() || times_fs.len() < 2 {
                return Err(Error::Config("sampled drive needs matching times/values, at least 2".into()));
            }
            if times_fs.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config("sampled drive times must be strictly increasing".into()));
            }
        }
        Ok(())
    }

    /// `kappa(n) = Re K_l(omega_{n,n-1})` for `n = 1..=dim`; index 0 is 0.
    pub fn kappa_table(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim + 1];
        for (n, slot) in out.iter_mut().enumerate().skip(1) {
            *slot = re_k_l(&self.coupling, transition_frequency(self.omega_a, self.beta, n));
        }
        out
    }

    /// Population decay rates `r_n = 2 n kappa(n)` for `n = 0..dim-1`.
    pub fn death_rates(&self) -> Vec<T> {
        let kappa = self.kappa_table();
        (0..self.dim)
            .map(|n| T::two() * T::of(n as f64) * kappa[n])
            .collect()
    }
}

/// Observables recorded along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservableRecord<T> {
    pub t_fs: T,
    pub mean: T,
    pub var: T,
    /// `None` where undefined (vacuum).
    pub squeezing_db: Option<T>,
    /// `None` where undefined (vacuum).
    pub g2: Option<T>,
    /// Population of the requested target Fock state, if one was set.
    pub fidelity: Option<T>,
    /// `|Tr rho - 1|` at this time.
    pub trace_defect: T,
}

/// Time series of observables with optionally stored state snapshots.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub records: Vec<ObservableRecord<T>>,
    /// `(record index, state)` pairs, per the store policy.
    pub states: Vec<(usize, DensityMatrix<T>)>,
}

fn fmt_opt<T: Real>(v: Option<T>) -> String {
    match v {
        Some(x) => format!("{:e}", x.to_f64().unwrap()),
        None => "nan".to_string(),
    }
}

impl<T: Real> Trajectory<T> {
    pub fn times_fs(&self) -> Vec<T> {
        self.records.iter().map(|r| r.t_fs).collect()
    }

    pub fn last_record(&self) -> &ObservableRecord<T> {
        self.records.last().expect("trajectory has at least one record")
    }

    pub fn final_state(&self) -> Option<&DensityMatrix<T>> {
        self.states.last().map(|(_, s)| s)
    }

    /// CSV rows `t_fs,mean_n,var_n,squeezing_db,g2,fidelity_n0,trace_defect`.
    pub fn write_csv<W: IoWrite>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t_fs,mean_n,var_n,squeezing_db,g2,fidelity_n0,trace_defect")?;
        for r in &self.records {
            writeln!(
                w,
                "{:e},{:e},{:e},{},{},{},{:e}",
                r.t_fs.to_f64().unwrap(),
                r.mean.to_f64().unwrap(),
                r.var.to_f64().unwrap(),
                fmt_opt(r.squeezing_db),
                fmt_opt(r.g2),
                fmt_opt(r.fidelity),
                r.trace_defect.to_f64().unwrap(),
            )?;
        }
        Ok(())
    }
}

/// Which snapshots to keep in the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StorePolicy {
    #[default]
    None,
    Final,
    /// Every k-th grid point plus the final one.
    Every(usize),
}

/// Integration method selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// Sector propagators when undriven, adaptive RK otherwise.
    #[default]
    Auto,
    AdaptiveRk,
    SectorExp,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvolveOptions {
    pub method: Method,
    pub fidelity_target: Option<usize>,
    pub store: StorePolicy,
}

/// Drive resolved to internal units.
enum DrivePlan<T: Real> {
    None,
    Pulse { amplitude: C<T>, center: T, fwhm: T, carrier: T },
    Sampled { times: Vec<T>, values: Vec<C<T>> },
}

impl<T: Real> DrivePlan<T> {
    fn resolve(drive: &DriveEnvelope<T>) -> Self {
        match drive {
            DriveEnvelope::None => DrivePlan::None,
            DriveEnvelope::GaussianPulse { amplitude_ev, center_fs, fwhm_fs, carrier_ev } => {
                DrivePlan::Pulse {
                    amplitude: *amplitude_ev,
                    center: fs_to_internal(*center_fs),
                    fwhm: fs_to_internal(*fwhm_fs),
                    carrier: *carrier_ev,
                }
            }
            DriveEnvelope::CustomSampled { times_fs, values_ev } => DrivePlan::Sampled {
                times: times_fs.iter().map(|&t| fs_to_internal(t)).collect(),
                values: values_ev.clone(),
            },
        }
    }

    fn is_none(&self) -> bool {
        matches!(self, DrivePlan::None)
    }

    /// `alpha(t)` in internal time.
    fn alpha(&self, t: T) -> C<T> {
        match self {
            DrivePlan::None => Complex::new(T::zero(), T::zero()),
            DrivePlan::Pulse { amplitude, center, fwhm, carrier } => {
                let x = t - *center;
                let ln2_4 = T::of(4.0 * std::f64::consts::LN_2);
                let env = (-ln2_4 * x * x / (*fwhm * *fwhm)).exp();
                let phi = -*carrier * t;
                *amplitude * Complex::new(phi.cos(), phi.sin()).scale(env)
            }
            DrivePlan::Sampled { times, values } => {
                if t < times[0] || t > *times.last().unwrap() {
                    return Complex::new(T::zero(), T::zero());
                }
                let mut lo = 0;
                let mut hi = times.len() - 1;
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if times[mid] <= t {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let w = (t - times[lo]) / (times[hi] - times[lo]);
                values[lo].scale(T::one() - w) + values[hi].scale(w)
            }
        }
    }
}

/// Precomputed right-hand side of the master equation.
pub struct Liouvillian<T: Real> {
    dim: usize,
    /// Elementwise multiplier `-i (h_m - h_n) - (m K_m + n conj(K_n))`.
    a_coef: Vec<C<T>>,
    /// Pull coefficient into `(m,n)` from `(m+1,n+1)`.
    b_coef: Vec<C<T>>,
    drive: DrivePlan<T>,
    frame: Frame,
    omega_a: T,
    sqrt_n: Vec<T>,
}

impl<T: Real> Liouvillian<T> {
    pub fn new(config: &SimulationConfig<T>) -> Self {
        let dim = config.dim;
        let kl = kl_table(config);
        let h = hamiltonian_diagonal(config);
        let mut a_coef = vec![Complex::new(T::zero(), T::zero()); dim * dim];
        let mut b_coef = vec![Complex::new(T::zero(), T::zero()); dim * dim];
        for m in 0..dim {
            for n in 0..dim {
                let idx = m * dim + n;
                let phase = Complex::new(T::zero(), -(h[m] - h[n]));
                let decay = kl[m].scale(T::of(m as f64)) + kl[n].conj().scale(T::of(n as f64));
                a_coef[idx] = phase - decay;
                if m + 1 < dim && n + 1 < dim {
                    let w = (T::of((m + 1) as f64) * T::of((n + 1) as f64)).sqrt();
                    b_coef[idx] = (kl[m + 1] + kl[n + 1].conj()).scale(w);
                }
            }
        }
        let sqrt_n = (0..=dim).map(|n| T::of(n as f64).sqrt()).collect();
        Liouvillian {
            dim,
            a_coef,
            b_coef,
            drive: DrivePlan::resolve(&config.drive),
            frame: config.frame,
            omega_a: config.omega_a,
            sqrt_n,
        }
    }

    /// `d rho / dt` on flattened row-major storage.
    pub fn rhs_flat(&self, t: T, y: &[C<T>], out: &mut [C<T>]) {
        let dim = self.dim;
        // Kerr phases and dissipator.
        for m in 0..dim {
            for n in 0..dim {
                let idx = m * dim + n;
                let mut acc = self.a_coef[idx] * y[idx];
                if m + 1 < dim && n + 1 < dim {
                    acc += self.b_coef[idx] * y[(m + 1) * dim + n + 1];
                }
                out[idx] = acc;
            }
        }
        if self.drive.is_none() {
            return;
        }
        // Drive commutator -i [b a + conj(b) a^dag, rho]; in the rotating
        // frame the coefficient picks up exp(i omega_a t).
        let alpha = self.drive.alpha(t);
        let b = match self.frame {
            Frame::Lab => alpha,
            Frame::RotatingAtOmegaA => {
                let phi = self.omega_a * t;
                alpha * Complex::new(phi.cos(), phi.sin())
            }
        };
        let bc = b.conj();
        let mi = Complex::new(T::zero(), -T::one());
        for m in 0..dim {
            for n in 0..dim {
                let idx = m * dim + n;
                // (a rho)_{mn} = sqrt(m+1) rho_{m+1,n}
                let mut comm = Complex::new(T::zero(), T::zero());
                if m + 1 < dim {
                    comm += (b * y[(m + 1) * dim + n]).scale(self.sqrt_n[m + 1]);
                }
                // -(rho a)_{mn} = -sqrt(n) rho_{m,n-1}
                if n >= 1 {
                    comm -= (b * y[m * dim + n - 1]).scale(self.sqrt_n[n]);
                }
                // (a^dag rho)_{mn} = sqrt(m) rho_{m-1,n}
                if m >= 1 {
                    comm += (bc * y[(m - 1) * dim + n]).scale(self.sqrt_n[m]);
                }
                // -(rho a^dag)_{mn} = -sqrt(n+1) rho_{m,n+1}
                if n + 1 < dim {
                    comm -= (bc * y[m * dim + n + 1]).scale(self.sqrt_n[n + 1]);
                }
                out[idx] += mi * comm;
            }
        }
    }
}

/// `K_l(omega_{n,n-1})` for `n = 0..dim` (index 0 unused). The imaginary
/// part uses the closed forms of the coupling families; for tabulated models
/// the Lamb shift is taken as absorbed into `omega_a` (consistent with the
/// quadratic reference model).
fn kl_table<T: Real>(config: &SimulationConfig<T>) -> Vec<C<T>> {
    let mut out = vec![Complex::new(T::zero(), T::zero()); config.dim];
    for (n, slot) in out.iter_mut().enumerate().skip(1) {
        let w = transition_frequency(config.omega_a, config.beta, n);
        let re = re_k_l(&config.coupling, w);
        let im = im_k_l_analytic(&config.coupling, w).unwrap_or(T::zero());
        *slot = Complex::new(re, im);
    }
    out
}

/// Hamiltonian diagonal per frame: `beta omega_a n(n-1)` rotating,
/// plus `omega_a n` in the lab frame.
fn hamiltonian_diagonal<T: Real>(config: &SimulationConfig<T>) -> Vec<T> {
    (0..config.dim)
        .map(|n| {
            let nf = T::of(n as f64);
            let kerr = config.beta * config.omega_a * nf * (nf - T::one());
            match config.frame {
                Frame::RotatingAtOmegaA => kerr,
                Frame::Lab => kerr + config.omega_a * nf,
            }
        })
        .collect()
}

/// The dissipator `D[rho]` of the master equation, elementwise:
/// `<m|D|n> = -(m K_m + n conj(K_n)) rho_mn
///           + sqrt((m+1)(n+1)) (K_{m+1} + conj(K_{n+1})) rho_{m+1,n+1}`
/// with `K_n = K_l(omega_{n,n-1})` and the absorbing top boundary.
pub fn dissipator_apply<T: Real>(
    rho: &DensityMatrix<T>,
    config: &SimulationConfig<T>,
) -> Array2<C<T>> {
    let dim = config.dim;
    assert_eq!(rho.dim(), dim, "state and config dimensions differ");
    let kl = kl_table(config);
    let r = rho.matrix();
    let mut out = Array2::zeros((dim, dim));
    for m in 0..dim {
        for n in 0..dim {
            let decay = kl[m].scale(T::of(m as f64)) + kl[n].conj().scale(T::of(n as f64));
            let mut acc = -decay * r[[m, n]];
            if m + 1 < dim && n + 1 < dim {
                let w = (T::of((m + 1) as f64) * T::of((n + 1) as f64)).sqrt();
                acc += (kl[m + 1] + kl[n + 1].conj()).scale(w) * r[[m + 1, n + 1]];
            }
            out[[m, n]] = acc;
        }
    }
    out
}

/// Full right-hand side `d rho/dt = -i [H, rho] + D[rho]` at time `t`
/// (internal units).
pub fn liouvillian_rhs<T: Real>(
    rho: &DensityMatrix<T>,
    t: T,
    config: &SimulationConfig<T>,
) -> Array2<C<T>> {
    let liou = Liouvillian::new(config);
    let y: Vec<C<T>> = rho.matrix().iter().copied().collect();
    let mut out = vec![Complex::new(T::zero(), T::zero()); y.len()];
    liou.rhs_flat(t, &y, &mut out);
    Array2::from_shape_vec((config.dim, config.dim), out).expect("shape")
}

fn build_record<T: Real>(
    t_fs: T,
    rho: &DensityMatrix<T>,
    fidelity_target: Option<usize>,
) -> ObservableRecord<T> {
    let probs = photon_distribution(rho);
    let (mean, var) = mean_var_of_distribution(&probs);
    let tr = rho.trace();
    let trace_defect = ((tr.re - T::one()) * (tr.re - T::one()) + tr.im * tr.im).sqrt();
    ObservableRecord {
        t_fs,
        mean,
        var,
        squeezing_db: squeezing_db_from_moments(mean, var).ok(),
        g2: g2_of_distribution(&probs).ok(),
        fidelity: fidelity_target.map(|n0| crate::observables::fidelity_fock(rho, n0)),
        trace_defect,
    }
}

fn check_grid<T: Real>(t_grid_fs: &[T]) -> Result<()> {
    if t_grid_fs.is_empty() {
        return Err(Error::Config("time grid must not be empty".into()));
    }
    if t_grid_fs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("time grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Integrate the master equation from `rho0` over the output grid (fs).
///
/// Adaptive stepping meets the configured tolerances; the trace drift per
/// unit internal time is checked against the configured budget and exceeds
/// it only by returning an error.
pub fn evolve<T: Real>(
    rho0: &DensityMatrix<T>,
    config: &SimulationConfig<T>,
    t_grid_fs: &[T],
    opts: &EvolveOptions,
) -> Result<Trajectory<T>> {
    config.validate()?;
    check_grid(t_grid_fs)?;
    if rho0.dim() != config.dim {
        return Err(Error::DimensionMismatch { expected: config.dim, got: rho0.dim() });
    }
    let t_grid: Vec<T> = t_grid_fs.iter().map(|&t| fs_to_internal(t)).collect();
    let use_sectors = match opts.method {
        Method::SectorExp => {
            if !config.drive.is_none() {
                return Err(Error::Config("sector propagators require drive = none".into()));
            }
            true
        }
        Method::AdaptiveRk => false,
        Method::Auto => config.drive.is_none(),
    };

    let store_at = |i: usize| -> bool {
        match opts.store {
            StorePolicy::None => false,
            StorePolicy::Final => i + 1 == t_grid.len(),
            StorePolicy::Every(k) => i.is_multiple_of(k.max(1)) || i + 1 == t_grid.len(),
        }
    };

    let mut records = Vec::with_capacity(t_grid.len());
    let mut states = Vec::new();
    let tr0 = rho0.trace();
    let budget = config.trace_budget_per_time;
    let t0 = t_grid[0];

    let mut handle_output = |i: usize, t: T, rho: &DensityMatrix<T>| -> Result<()> {
        let rec = build_record(internal_to_fs(t), rho, opts.fidelity_target);
        let drift = (rho.trace() - tr0).norm();
        let allowed = budget * (t - t0).max(T::one());
        if drift > allowed {
            return Err(Error::Accuracy {
                context: "trace drift during evolve",
                estimate: drift.to_f64().unwrap_or(f64::NAN),
                budget: allowed.to_f64().unwrap_or(f64::NAN),
            });
        }
        records.push(rec);
        if store_at(i) {
            states.push((i, rho.clone()));
        }
        Ok(())
    };

    if use_sectors {
        let kl = kl_table(config);
        let h = hamiltonian_diagonal(config);
        let mut cache = PropagatorCache::new(SectorChains::new(&kl, &h));
        let mut rho = rho0.matrix().clone();
        handle_output(0, t_grid[0], rho0)?;
        for i in 1..t_grid.len() {
            let dt = t_grid[i] - t_grid[i - 1];
            cache.step(&mut rho, dt);
            let state = DensityMatrix::from_matrix_unchecked(rho.clone());
            handle_output(i, t_grid[i], &state)?;
        }
    } else {
        let liou = Liouvillian::new(config);
        let y0: Vec<C<T>> = rho0.matrix().iter().copied().collect();
        let rk_opts = RkOptions {
            rel_tol: config.rel_tol,
            abs_tol: config.abs_tol,
            ..RkOptions::default()
        };
        let dim = config.dim;
        let mut deferred: Result<()> = Ok(());
        integrate_adaptive(
            &y0,
            &t_grid,
            &rk_opts,
            |t, y, dy| liou.rhs_flat(t, y, dy),
            |i, t, y| {
                if deferred.is_err() {
                    return;
                }
                let m = Array2::from_shape_vec((dim, dim), y.to_vec()).expect("shape");
                let state = DensityMatrix::from_matrix_unchecked(m);
                if let Err(e) = handle_output(i, t, &state) {
                    deferred = Err(e);
                }
            },
        )?;
        deferred?;
    }

    Ok(Trajectory { records, states })
}

/// Diagonal trajectory from the pure-death chain.
#[derive(Debug, Clone)]
pub struct DiagonalTrajectory<T: Real> {
    pub records: Vec<ObservableRecord<T>>,
    /// Probability vectors at each grid time.
    pub probs: Vec<Vec<T>>,
}

impl<T: Real> DiagonalTrajectory<T> {
    pub fn times_fs(&self) -> Vec<T> {
        self.records.iter().map(|r| r.t_fs).collect()
    }

    pub fn last_record(&self) -> &ObservableRecord<T> {
        self.records.last().expect("at least one record")
    }

    pub fn final_probs(&self) -> &[T] {
        self.probs.last().expect("at least one record")
    }

    /// Same CSV layout as [`Trajectory::write_csv`].
    pub fn write_csv<W: IoWrite>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t_fs,mean_n,var_n,squeezing_db,g2,fidelity_n0,trace_defect")?;
        for r in &self.records {
            writeln!(
                w,
                "{:e},{:e},{:e},{},{},{},{:e}",
                r.t_fs.to_f64().unwrap(),
                r.mean.to_f64().unwrap(),
                r.var.to_f64().unwrap(),
                fmt_opt(r.squeezing_db),
                fmt_opt(r.g2),
                fmt_opt(r.fidelity),
                r.trace_defect.to_f64().unwrap(),
            )?;
        }
        Ok(())
    }
}

/// Integrate the decoupled diagonal `dp_n/dt = -r_n p_n + r_{n+1} p_{n+1}`
/// (`r_n = 2 n kappa(n)`) from `p0` over the output grid (fs).
///
/// Requires `drive = none`: with a drive the diagonal no longer closes.
pub fn evolve_diagonal<T: Real>(
    p0: &[T],
    config: &SimulationConfig<T>,
    t_grid_fs: &[T],
    fidelity_target: Option<usize>,
) -> Result<DiagonalTrajectory<T>> {
    config.validate()?;
    check_grid(t_grid_fs)?;
    if !config.drive.is_none() {
        return Err(Error::DriveUnsupported);
    }
    if p0.len() != config.dim {
        return Err(Error::DimensionMismatch { expected: config.dim, got: p0.len() });
    }
    let t_grid: Vec<T> = t_grid_fs.iter().map(|&t| fs_to_internal(t)).collect();
    let mut chain = DeathChain::new(config.death_rates());
    let mut p = p0.to_vec();
    let total0: T = p.iter().copied().sum();

    let mut records = Vec::with_capacity(t_grid.len());
    let mut probs = Vec::with_capacity(t_grid.len());
    for i in 0..t_grid.len() {
        if i > 0 {
            let dt = t_grid[i] - t_grid[i - 1];
            chain.step(&mut p, dt);
        }
        let (mean, var) = mean_var_of_distribution(&p);
        let total: T = p.iter().copied().sum();
        records.push(ObservableRecord {
            t_fs: internal_to_fs(t_grid[i]),
            mean,
            var,
            squeezing_db: squeezing_db_from_moments(mean, var).ok(),
            g2: g2_of_distribution(&p).ok(),
            fidelity: fidelity_target.and_then(|n0| p.get(n0).copied()),
            trace_defect: (total - total0).abs(),
        });
        probs.push(p.clone());
    }
    Ok(DiagonalTrajectory { records, probs })
}

/// Mean/variance trajectory from the second-order moment closure.
#[derive(Debug, Clone)]
pub struct MomentTrajectory<T: Real> {
    pub times_fs: Vec<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
    /// Per-point closure breakdown flag (`var < 0` or `var > 10 mean`).
    pub warning: Vec<bool>,
}

impl<T: Real> MomentTrajectory<T> {
    pub fn any_warning(&self) -> bool {
        self.warning.iter().any(|&w| w)
    }

    pub fn squeezing_db(&self) -> Vec<Option<T>> {
        self.mean
            .iter()
            .zip(&self.var)
            .map(|(&m, &v)| squeezing_db_from_moments(m, v).ok())
            .collect()
    }

    /// CSV rows `t_fs,mean_n,var_n,squeezing_db,g2,warning`.
    pub fn write_csv<W: IoWrite>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t_fs,mean_n,var_n,squeezing_db,g2,warning")?;
        for i in 0..self.times_fs.len() {
            let m = self.mean[i];
            let v = self.var[i];
            let g2 = if m > T::zero() {
                Some((v + m * m - m) / (m * m))
            } else {
                None
            };
            writeln!(
                w,
                "{:e},{:e},{:e},{},{},{}",
                self.times_fs[i].to_f64().unwrap(),
                m.to_f64().unwrap(),
                v.to_f64().unwrap(),
                fmt_opt(squeezing_db_from_moments(m, v).ok()),
                fmt_opt(g2),
                u8::from(self.warning[i]),
            )?;
        }
        Ok(())
    }
}

/// Death-rate function and its first two derivatives at a continuous photon
/// number, for the moment closure.
fn death_rate_derivs<T: Real>(config: &SimulationConfig<T>, x: T) -> (T, T, T) {
    let wa = config.omega_a;
    let beta = config.beta;
    match config.coupling {
        // r(x) = 2 kappa x.
        CouplingModel::Constant { kappa } => (T::two() * kappa * x, T::two() * kappa, T::zero()),
        // kappa(x) = kappa_i + a (x - n0)^2 with a = c2 (2 beta omega_a)^2:
        // r    = 2 kappa_i x + 2 a x (x - n0)^2
        // r'   = 2 kappa_i + 2 a [(x - n0)^2 + 2 x (x - n0)]
        // r''  = 4 a (3 x - 2 n0)
        CouplingModel::QuadraticLoss { omega0, c2, kappa_i } => {
            let two_beta_wa = T::two() * beta * wa;
            let a = c2 * two_beta_wa * two_beta_wa;
            // omega_{x,x-1} = omega0 at x = n0.
            let n0 = (omega0 - wa) / two_beta_wa + T::one();
            let d = x - n0;
            let r = T::two() * kappa_i * x + T::two() * a * x * d * d;
            let r1 = T::two() * kappa_i + T::two() * a * (d * d + T::two() * x * d);
            let r2 = T::of(4.0) * a * (T::of(3.0) * x - T::two() * n0);
            (r, r1, r2)
        }
        // Central differences on the photon-number axis; the loss varies on
        // the scale gamma / (2 beta omega_a) photons, far wider than the
        // chosen step.
        _ => {
            let r_of = |x: T| {
                let w = wa * (T::one() + T::two() * beta * (x - T::one()));
                T::two() * x * re_k_l(&config.coupling, w)
            };
            let h = (x.abs() + T::one()) * T::of(1e-5);
            let rp = r_of(x + h);
            let rm = r_of(x - h);
            let r0 = r_of(x);
            (r0, (rp - rm) / (T::two() * h), (rp + rm - T::two() * r0) / (h * h))
        }
    }
}

/// Second-order moment closure of the death chain.
///
/// From `dp_n/dt = -r_n p_n + r_{n+1} p_{n+1}` one gets
/// `d<f>/dt = <r_n (f(n-1) - f(n))>`. With `f = n` and `f = n^2`, expanding
/// `r` to second order around the mean `mu` and closing with a vanishing
/// third central moment (`<r> = r + r'' v / 2`,
/// `<n r> = mu r + (r' + mu r''/2) v`):
///
/// `d mu / dt = -r(mu) - r''(mu) v / 2`
/// `d v  / dt =  r(mu) + (r''(mu)/2 - 2 r'(mu)) v`
///
/// For linear rates (constant kappa) this is exact and gives
/// `mu(t) = mu_0 e^{-2 kappa t}` with the Fano factor relaxing to 1 from
/// above.
pub fn moment_closure_evolve<T: Real>(
    mean0: T,
    var0: T,
    config: &SimulationConfig<T>,
    t_grid_fs: &[T],
) -> Result<MomentTrajectory<T>> {
    config.validate()?;
    check_grid(t_grid_fs)?;
    if !config.drive.is_none() {
        return Err(Error::DriveUnsupported);
    }
    if mean0 <= T::one() {
        return Err(Error::Config("moment closure needs mean0 >> 1".into()));
    }
    let t_grid: Vec<T> = t_grid_fs.iter().map(|&t| fs_to_internal(t)).collect();
    let rk_opts = RkOptions {
        rel_tol: config.rel_tol.max(T::of(1e-10)),
        abs_tol: config.abs_tol.max(T::of(1e-12)),
        ..RkOptions::default()
    };
    let mut times_fs = Vec::with_capacity(t_grid.len());
    let mut mean = Vec::with_capacity(t_grid.len());
    let mut var = Vec::with_capacity(t_grid.len());
    let mut warning = Vec::with_capacity(t_grid.len());
    integrate_adaptive(
        &[mean0, var0],
        &t_grid,
        &rk_opts,
        |_t, y, dy| {
            let mu = y[0].max(T::zero());
            let v = y[1];
            let (r, r1, r2) = death_rate_derivs(config, mu);
            dy[0] = -r - r2 * v * T::half();
            dy[1] = r + (r2 * T::half() - T::two() * r1) * v;
        },
        |_i, t, y| {
            times_fs.push(internal_to_fs(t));
            mean.push(y[0]);
            var.push(y[1]);
            warning.push(y[1] < T::zero() || y[1] > T::of(10.0) * y[0]);
        },
    )?;
    Ok(MomentTrajectory { times_fs, mean, var, warning })
}

/// How [`pump_and_ringdown`] prepares the initial excitation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PumpMode<T> {
    /// Skip the pulse and start from `coherent(mean_n, phase)` directly.
    /// This mode is by definition identical to [`evolve`] from that state.
    Preload { mean_n: T, phase: T },
    /// Drive the configured pulse from vacuum, then ring down. With
    /// `target_mean` set, the pulse amplitude is rescaled by a secant search
    /// until the post-pulse mean hits the target within 1%.
    Pulse { target_mean: Option<T> },
}

/// Load the resonator (short pulse or preloaded coherent state), then let it
/// ring down for `ringdown_horizon_fs`, recording `output_points` samples.
pub fn pump_and_ringdown<T: Real>(
    config: &SimulationConfig<T>,
    mode: PumpMode<T>,
    ringdown_horizon_fs: T,
    output_points: usize,
    opts: &EvolveOptions,
) -> Result<Trajectory<T>> {
    config.validate()?;
    if output_points < 2 {
        return Err(Error::Config("need at least 2 output points".into()));
    }
    match mode {
        PumpMode::Preload { mean_n, phase } => {
            let rho0 = coherent_state(mean_n, phase, config.dim)?;
            let mut undriven = config.clone();
            undriven.drive = DriveEnvelope::None;
            let grid = linspace(T::zero(), ringdown_horizon_fs, output_points);
            evolve(&rho0, &undriven, &grid, opts)
        }
        PumpMode::Pulse { target_mean } => {
            let (center_fs, fwhm_fs) = match config.drive {
                DriveEnvelope::GaussianPulse { center_fs, fwhm_fs, .. } => (center_fs, fwhm_fs),
                _ => {
                    return Err(Error::Config(
                        "pump_and_ringdown pulse mode needs a gaussian-pulse drive".into(),
                    ))
                }
            };
            validate_pulse_shortness(config, fwhm_fs)?;
            let pulse_end_fs = center_fs + T::of(3.5) * fwhm_fs;

            let config = match target_mean {
                None => config.clone(),
                Some(target) => calibrate_pulse(config, target, pulse_end_fs)?,
            };

            // Through the pulse (driven, adaptive RK under the hood). The
            // final state is always stored so the ringdown can continue.
            let pulse_points = (output_points / 8).max(17);
            let pulse_grid = linspace(T::zero(), pulse_end_fs, pulse_points);
            let vacuum = crate::fockspace::fock_state(crate::fockspace::FockLabel(0), config.dim)?;
            let pulse_opts = EvolveOptions {
                method: opts.method,
                fidelity_target: opts.fidelity_target,
                store: match opts.store {
                    StorePolicy::None => StorePolicy::Final,
                    other => other,
                },
            };
            let head = evolve(&vacuum, &config, &pulse_grid, &pulse_opts)?;
            let after_pulse = head
                .final_state()
                .expect("pulse phase stores its final state")
                .clone();

            // Ring down with the drive off.
            let mut undriven = config.clone();
            undriven.drive = DriveEnvelope::None;
            let tail_grid: Vec<T> = linspace(T::zero(), ringdown_horizon_fs, output_points)
                .into_iter()
                .map(|t| t + pulse_end_fs)
                .collect();
            let tail = evolve(&after_pulse, &undriven, &tail_grid, opts)?;

            let mut records = head.records;
            let head_len = records.len();
            records.extend(tail.records.into_iter().skip(1));
            let mut states: Vec<(usize, DensityMatrix<T>)> = match opts.store {
                StorePolicy::None => Vec::new(),
                _ => head.states,
            };
            // The tail's first grid point is the pulse boundary, already
            // covered by the head.
            for (i, s) in tail.states {
                if i > 0 {
                    states.push((head_len - 1 + i, s));
                }
            }
            Ok(Trajectory { records, states })
        }
    }
}

/// The pulse must be short against both the fastest decay (`1/max kappa(n)`)
/// and the Kerr dephasing across the basis (`1/(beta omega_a dim)`).
fn validate_pulse_shortness<T: Real>(config: &SimulationConfig<T>, fwhm_fs: T) -> Result<()> {
    let fwhm = fs_to_internal(fwhm_fs);
    let kappa_max = config
        .kappa_table()
        .into_iter()
        .fold(T::zero(), T::max);
    if kappa_max > T::zero() && fwhm >= T::one() / kappa_max {
        return Err(Error::Config(format!(
            "pulse ({} internal units) is not short against 1/max kappa(n) = {}",
            fwhm.to_f64().unwrap_or(f64::NAN),
            (T::one() / kappa_max).to_f64().unwrap_or(f64::NAN),
        )));
    }
    let kerr = config.beta * config.omega_a * T::of(config.dim as f64);
    if kerr > T::zero() && fwhm >= T::one() / kerr {
        return Err(Error::Config(format!(
            "pulse ({} internal units) is not short against 1/(beta omega_a dim) = {}",
            fwhm.to_f64().unwrap_or(f64::NAN),
            (T::one() / kerr).to_f64().unwrap_or(f64::NAN),
        )));
    }
    Ok(())
}

/// Secant search on the pulse amplitude scale so that the post-pulse mean
/// photon number hits `target` within 1%. The mean scales nearly
/// quadratically with the amplitude, so this converges in a few steps.
fn calibrate_pulse<T: Real>(
    config: &SimulationConfig<T>,
    target: T,
    pulse_end_fs: T,
) -> Result<SimulationConfig<T>> {
    if target <= T::zero() {
        return Err(Error::Config("pulse target mean must be positive".into()));
    }
    let mean_after = |scale: T| -> Result<T> {
        let mut c = config.clone();
        scale_drive(&mut c.drive, scale);
        let vacuum = crate::fockspace::fock_state(crate::fockspace::FockLabel(0), c.dim)?;
        let grid = vec![T::zero(), pulse_end_fs];
        let traj = evolve(&vacuum, &c, &grid, &EvolveOptions::default())?;
        Ok(traj.last_record().mean)
    };

    let tol = T::of(0.01) * target;
    let mut s_prev = T::one();
    let mut f_prev = mean_after(s_prev)? - target;
    if f_prev.abs() <= tol {
        let mut c = config.clone();
        scale_drive(&mut c.drive, s_prev);
        return Ok(c);
    }
    if f_prev + target <= T::zero() {
        return Err(Error::Config("pulse deposits no photons; cannot calibrate".into()));
    }
    // Quadratic scaling gives an excellent second guess.
    let mut s = s_prev * (target / (f_prev + target)).sqrt();
    for _ in 0..25 {
        let f = mean_after(s)? - target;
        if f.abs() <= tol {
            let mut c = config.clone();
            scale_drive(&mut c.drive, s);
            return Ok(c);
        }
        let denom = f - f_prev;
        if denom == T::zero() {
            break;
        }
        let s_next = s - f * (s - s_prev) / denom;
        s_prev = s;
        f_prev = f;
        s = if s_next > T::zero() { s_next } else { s * T::half() };
    }
    Err(Error::Config("pulse calibration did not converge to 1%".into()))
}

fn scale_drive<T: Real>(drive: &mut DriveEnvelope<T>, scale: T) {
    match drive {
        DriveEnvelope::None => {}
        DriveEnvelope::GaussianPulse { amplitude_ev, .. } => {
            *amplitude_ev = amplitude_ev.scale(scale);
        }
        DriveEnvelope::CustomSampled { values_ev, .. } => {
            for v in values_ev.iter_mut() {
                *v = v.scale(scale);
            }
        }
    }
}

/// Uniform grid from `a` to `b` inclusive.
pub fn linspace<T: Real>(a: T, b: T, n: usize) -> Vec<T> {
    assert!(n >= 2);
    let step = (b - a) / T::of((n - 1) as f64);
    (0..n)
        .map(|i| if i + 1 == n { b } else { a + step * T::of(i as f64) })
        .collect()
}

/// Write a state snapshot as rows of `re im` pairs (row-major), to
/// `<dir>/state_t<fs>.dat`. Returns the path written.
pub fn write_snapshot<T: Real, P: AsRef<Path>>(
    dir: P,
    t_fs: T,
    state: &DensityMatrix<T>,
) -> Result<PathBuf> {
    let path = dir.as_ref().join(format!("state_t{}.dat", t_fs));
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
    let dim = state.dim();
    for m in 0..dim {
        let mut line = String::new();
        for n in 0..dim {
            if n > 0 {
                line.push(' ');
            }
            let v = state.entry(m, n);
            line.push_str(&format!(
                "{:e} {:e}",
                v.re.to_f64().unwrap(),
                v.im.to_f64().unwrap()
            ));
        }
        writeln!(f, "{line}")?;
    }
    Ok(path)
}
