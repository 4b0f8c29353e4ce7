//! Scenario files: the TOML schema, validation, and conversion into core
//! types. All physical inputs are eV and fs; dimensionless ratios
//! (`beta`, `delta0/omega_a`) are taken directly.

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use nbic_core::coupling::{CouplingModel, TabulatedCoupling};
use nbic_core::design::detuning_for_fock;
use nbic_core::dynamics::{DriveEnvelope, Frame, Method, SimulationConfig};
use nbic_core::fockspace::{
    coherent_state_with_tail, fock_state, poisson_pmf, truncation_dim, DensityMatrix, FockLabel,
};
use nbic_core::scalar::cr;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub task: Task,
    pub resonator: Resonator,
    pub coupling: Coupling,
    #[serde(default)]
    pub initial_state: InitialState,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub drive: Option<Drive>,
    #[serde(default)]
    pub grid: Option<Grid>,
    #[serde(default)]
    pub observables: Observables,
    #[serde(default)]
    pub pinem: Option<Pinem>,
    #[serde(default)]
    pub design: Option<Design>,
    #[serde(default)]
    pub output: Output,
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Evolve,
    LossProfile,
    Design,
    Pinem,
    MomentClosure,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resonator {
    pub omega_a_ev: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coupling {
    pub kind: CouplingKind,
    /// Loss-zero detuning as a fraction of omega_a (quadratic-loss).
    pub delta0_over_omega_a: Option<f64>,
    /// Alternative to `delta0_over_omega_a`: integer-tune the loss zero.
    pub target_fock: Option<usize>,
    /// Curvature of Re K_l at its minimum, 1/eV (quadratic-loss).
    pub c2_per_ev: Option<f64>,
    #[serde(default)]
    pub kappa_i_over_omega_a: f64,
    /// Radiative rate over omega_a (constant / waveguide / fano).
    pub kappa_over_omega_a: Option<f64>,
    /// Interference scale over omega_a (waveguide: inverse round trip;
    /// fano: low-Q linewidth).
    pub gamma_over_omega_a: Option<f64>,
    /// Waveguide phase offset (radians); when omitted the zero is placed on
    /// the `target_fock` transition.
    pub theta_rad: Option<f64>,
    /// Fano dark-resonance frequency (eV); when omitted it is placed on the
    /// `target_fock` transition.
    pub omega_d_ev: Option<f64>,
    /// Tabulated |K_c|^2 file (two columns, `# omega_eV kc2_eV` header).
    pub file: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingKind {
    Constant,
    TerminatedWaveguide,
    FanoTwoResonator,
    QuadraticLoss,
    Tabulated,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    /// `vacuum`, `fock:N`, `coherent:MEAN[:PHASE]`, or `poisson:MEAN`.
    pub spec: String,
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState { spec: "vacuum".into() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    pub tail_tol: f64,
    pub dim: Option<usize>,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation { tail_tol: 1e-10, dim: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Integrator {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub trace_budget_per_time: f64,
    /// `auto`, `adaptive-rk`, or `sector-exp`.
    pub method: String,
    /// `auto`, `full`, or `diagonal` (evolve task only).
    pub path: String,
    /// `rotating` or `lab`.
    pub frame: String,
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator {
            rel_tol: 1e-10,
            abs_tol: 1e-13,
            trace_budget_per_time: 1e-9,
            method: "auto".into(),
            path: "auto".into(),
            frame: "rotating".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Drive {
    pub kind: String,
    #[serde(default)]
    pub amplitude_ev: f64,
    #[serde(default)]
    pub center_fs: f64,
    #[serde(default)]
    pub fwhm_fs: f64,
    #[serde(default)]
    pub carrier_ev: f64,
    /// Auto-calibrate the amplitude so the post-pulse mean hits this value.
    pub target_mean: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub t_end_fs: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observables {
    pub fidelity_target: Option<usize>,
    /// Write `probabilities.csv` with `p_n(t)` for `n <= max`.
    pub photon_probabilities_max_n: Option<usize>,
    pub husimi: Option<Husimi>,
    /// Write `state_t<fs>.dat` snapshots at these times.
    #[serde(default)]
    pub snapshot_times_fs: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Husimi {
    pub radius: f64,
    pub points: usize,
    pub times_fs: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pinem {
    #[serde(default)]
    pub states: Vec<String>,
    pub g: Vec<f64>,
    pub k_max: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Design {
    pub n_max: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub directory: String,
}

impl Default for Output {
    fn default() -> Self {
        Output { directory: "out".into() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub parameter: String,
    #[serde(default)]
    pub values: Vec<f64>,
    #[serde(default)]
    pub values_str: Vec<String>,
}

impl SweepAxis {
    pub fn len(&self) -> usize {
        self.values.len() + self.values_str.len()
    }

    pub fn value_label(&self, idx: usize) -> String {
        if idx < self.values.len() {
            format!("{:e}", self.values[idx])
        } else {
            self.values_str[idx - self.values.len()].clone()
        }
    }
}

/// Parsed initial-state description.
#[derive(Debug, Clone, PartialEq)]
pub enum StateSpec {
    Vacuum,
    Fock(usize),
    Coherent { mean: f64, phase: f64 },
    /// Diagonal Poissonian mixture (the diagonal of a coherent state).
    Poisson(f64),
}

impl StateSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let mut parts = text.split(':');
        let head = parts.next().unwrap_or_default();
        let arg = |p: Option<&str>| -> Result<f64> {
            p.ok_or_else(|| anyhow!("state `{text}` is missing its argument"))?
                .parse::<f64>()
                .with_context(|| format!("bad number in state `{text}`"))
        };
        let spec = match head {
            "vacuum" => StateSpec::Vacuum,
            "fock" => {
                let n = arg(parts.next())?;
                if n < 0.0 || n.fract() != 0.0 {
                    bail!("fock state needs a nonnegative integer, got `{text}`");
                }
                StateSpec::Fock(n as usize)
            }
            "coherent" => {
                let mean = arg(parts.next())?;
                let phase = match parts.next() {
                    Some(p) => p.parse::<f64>().with_context(|| format!("bad phase in `{text}`"))?,
                    None => 0.0,
                };
                StateSpec::Coherent { mean, phase }
            }
            "poisson" => StateSpec::Poisson(arg(parts.next())?),
            other => bail!("unknown state kind `{other}` (vacuum|fock:N|coherent:M[:PH]|poisson:M)"),
        };
        if parts.next().is_some() {
            bail!("trailing fields in state `{text}`");
        }
        Ok(spec)
    }

    /// Whether the state is diagonal in the Fock basis.
    pub fn is_diagonal(&self) -> bool {
        !matches!(self, StateSpec::Coherent { mean, .. } if *mean > 0.0)
    }

    /// Smallest dimension holding the state at `tail_tol`.
    pub fn required_dim(&self, tail_tol: f64) -> usize {
        match *self {
            StateSpec::Vacuum => 2,
            StateSpec::Fock(n) => n + 2,
            StateSpec::Coherent { mean, .. } | StateSpec::Poisson(mean) => {
                truncation_dim(mean, tail_tol)
            }
        }
    }

    pub fn density_matrix(&self, dim: usize, tail_tol: f64) -> Result<DensityMatrix<f64>> {
        Ok(match *self {
            StateSpec::Vacuum => fock_state(FockLabel(0), dim)?,
            StateSpec::Fock(n) => fock_state(FockLabel(n), dim)?,
            StateSpec::Coherent { mean, phase } => {
                coherent_state_with_tail(mean, phase, dim, tail_tol)?
            }
            StateSpec::Poisson(mean) => DensityMatrix::from_diagonal(&poisson_pmf(mean, dim)),
        })
    }

    pub fn probabilities(&self, dim: usize) -> Vec<f64> {
        match *self {
            StateSpec::Vacuum => {
                let mut p = vec![0.0; dim];
                p[0] = 1.0;
                p
            }
            StateSpec::Fock(n) => {
                let mut p = vec![0.0; dim];
                p[n.min(dim - 1)] = if n < dim { 1.0 } else { 0.0 };
                p
            }
            StateSpec::Coherent { mean, .. } | StateSpec::Poisson(mean) => poisson_pmf(mean, dim),
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text)
            .map_err(|e| anyhow!("{origin}: {e}"))?;
        if scenario.schema_version != SCHEMA_VERSION {
            bail!(
                "{origin}: schema_version {} unsupported (this build expects {SCHEMA_VERSION})",
                scenario.schema_version
            );
        }
        scenario.validate().with_context(|| format!("{origin}: invalid scenario"))?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if self.resonator.omega_a_ev <= 0.0 {
            bail!("resonator.omega_a_ev must be positive");
        }
        if self.resonator.beta < 0.0 {
            bail!("resonator.beta must be nonnegative");
        }
        StateSpec::parse(&self.initial_state.spec)?;
        self.coupling_model()?;
        match self.task {
            Task::Evolve | Task::MomentClosure => {
                self.grid
                    .as_ref()
                    .ok_or_else(|| anyhow!("task `{:?}` needs a [grid] section", self.task))?;
            }
            Task::Pinem => {
                let p = self
                    .pinem
                    .as_ref()
                    .ok_or_else(|| anyhow!("task `pinem` needs a [pinem] section"))?;
                if p.g.is_empty() {
                    bail!("pinem.g must list at least one coupling");
                }
                for s in &p.states {
                    StateSpec::parse(s)?;
                }
            }
            Task::LossProfile | Task::Design => {
                self.design
                    .as_ref()
                    .ok_or_else(|| anyhow!("task `{:?}` needs a [design] section", self.task))?;
            }
        }
        if let Some(g) = &self.grid {
            if g.points < 2 {
                bail!("grid.points must be at least 2");
            }
            if g.t_end_fs <= 0.0 {
                bail!("grid.t_end_fs must be positive");
            }
        }
        for axis in &self.sweep {
            if axis.len() == 0 {
                bail!("sweep axis `{}` has no values", axis.parameter);
            }
            // Probe that the parameter path is known.
            let mut probe = self.clone();
            probe.sweep.clear();
            apply_parameter(&mut probe, &axis.parameter, &SweepValue::of_axis(axis, 0))?;
        }
        Ok(())
    }

    pub fn omega_a(&self) -> f64 {
        self.resonator.omega_a_ev
    }

    /// The detuning of the loss zero in eV, from either field.
    pub fn delta0_ev(&self) -> Result<f64> {
        if let Some(r) = self.coupling.delta0_over_omega_a {
            return Ok(r * self.omega_a());
        }
        if let Some(n0) = self.coupling.target_fock {
            if n0 < 1 {
                bail!("coupling.target_fock must be >= 1");
            }
            return Ok(detuning_for_fock(n0, self.omega_a(), self.resonator.beta));
        }
        bail!("coupling needs delta0_over_omega_a or target_fock")
    }

    pub fn coupling_model(&self) -> Result<CouplingModel<f64>> {
        let wa = self.omega_a();
        let kappa_i = self.coupling.kappa_i_over_omega_a * wa;
        let kappa = self.coupling.kappa_over_omega_a.map(|r| r * wa);
        let gamma = self.coupling.gamma_over_omega_a.map(|r| r * wa);
        let need = |v: Option<f64>, what: &str| {
            v.ok_or_else(|| anyhow!("coupling.{what} required for kind {:?}", self.coupling.kind))
        };
        Ok(match self.coupling.kind {
            CouplingKind::Constant => CouplingModel::Constant {
                kappa: need(kappa, "kappa_over_omega_a")?,
            },
            CouplingKind::TerminatedWaveguide => {
                let gamma = need(gamma, "gamma_over_omega_a")?;
                let theta = match self.coupling.theta_rad {
                    Some(t) => t,
                    // Place the interference zero on the tuned transition.
                    None => 2.0 * std::f64::consts::PI - (wa + self.delta0_ev()?) / gamma,
                };
                CouplingModel::TerminatedWaveguide {
                    kappa: need(kappa, "kappa_over_omega_a")?,
                    gamma,
                    theta,
                    kappa_i,
                }
            }
            CouplingKind::FanoTwoResonator => {
                let omega_d = match self.coupling.omega_d_ev {
                    Some(w) => w,
                    None => wa + self.delta0_ev()?,
                };
                CouplingModel::FanoTwoResonator {
                    kappa: need(kappa, "kappa_over_omega_a")?,
                    gamma: need(gamma, "gamma_over_omega_a")?,
                    omega_d,
                    kappa_i,
                }
            }
            CouplingKind::QuadraticLoss => CouplingModel::QuadraticLoss {
                omega0: wa + self.delta0_ev()?,
                c2: need(self.coupling.c2_per_ev, "c2_per_ev")?,
                kappa_i,
            },
            CouplingKind::Tabulated => {
                let path = self
                    .coupling
                    .file
                    .as_ref()
                    .ok_or_else(|| anyhow!("coupling.file required for tabulated kind"))?;
                CouplingModel::Tabulated(TabulatedCoupling::from_path(path)?)
            }
        })
    }

    pub fn state_spec(&self) -> Result<StateSpec> {
        StateSpec::parse(&self.initial_state.spec)
    }

    /// Fock truncation: explicit override, or sized from the initial state
    /// (and the pulse target when one is configured).
    pub fn dim(&self) -> Result<usize> {
        if let Some(dim) = self.truncation.dim {
            return Ok(dim.max(2));
        }
        let tail = self.truncation.tail_tol;
        let mut dim = self.state_spec()?.required_dim(tail);
        if let Some(drive) = &self.drive {
            if let Some(target) = drive.target_mean {
                // Headroom for calibration overshoot.
                dim = dim.max(truncation_dim(1.6 * target, tail));
            }
        }
        Ok(dim.max(2))
    }

    pub fn method(&self) -> Result<Method> {
        Ok(match self.integrator.method.as_str() {
            "auto" => Method::Auto,
            "adaptive-rk" => Method::AdaptiveRk,
            "sector-exp" => Method::SectorExp,
            other => bail!("unknown integrator.method `{other}`"),
        })
    }

    pub fn frame(&self) -> Result<Frame> {
        Ok(match self.integrator.frame.as_str() {
            "rotating" => Frame::RotatingAtOmegaA,
            "lab" => Frame::Lab,
            other => bail!("unknown integrator.frame `{other}`"),
        })
    }

    pub fn drive_envelope(&self) -> Result<DriveEnvelope<f64>> {
        Ok(match &self.drive {
            None => DriveEnvelope::None,
            Some(d) => match d.kind.as_str() {
                "none" => DriveEnvelope::None,
                "gaussian-pulse" => DriveEnvelope::GaussianPulse {
                    amplitude_ev: cr(d.amplitude_ev),
                    center_fs: d.center_fs,
                    fwhm_fs: d.fwhm_fs,
                    carrier_ev: d.carrier_ev,
                },
                other => bail!("unknown drive.kind `{other}`"),
            },
        })
    }

    pub fn simulation_config(&self) -> Result<SimulationConfig<f64>> {
        let mut config = SimulationConfig::new(
            self.omega_a(),
            self.resonator.beta,
            self.coupling_model()?,
            self.dim()?,
        );
        config.drive = self.drive_envelope()?;
        config.frame = self.frame()?;
        config.rel_tol = self.integrator.rel_tol;
        config.abs_tol = self.integrator.abs_tol;
        config.trace_budget_per_time = self.integrator.trace_budget_per_time;
        config.validate().map_err(|e| anyhow!("{e}"))?;
        Ok(config)
    }
}

/// One sweep value, numeric or string.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepValue {
    Number(f64),
    Text(String),
}

impl SweepValue {
    pub fn of_axis(axis: &SweepAxis, idx: usize) -> SweepValue {
        if idx < axis.values.len() {
            SweepValue::Number(axis.values[idx])
        } else {
            SweepValue::Text(axis.values_str[idx - axis.values.len()].clone())
        }
    }

    fn number(&self, param: &str) -> Result<f64> {
        match self {
            SweepValue::Number(v) => Ok(*v),
            SweepValue::Text(t) => bail!("sweep parameter `{param}` needs a number, got `{t}`"),
        }
    }

    fn text(&self, param: &str) -> Result<&str> {
        match self {
            SweepValue::Text(t) => Ok(t),
            SweepValue::Number(v) => bail!("sweep parameter `{param}` needs a string, got {v}"),
        }
    }
}

/// Set a sweepable parameter by path. Unknown paths are a configuration
/// error (exit code 2 at the CLI boundary).
pub fn apply_parameter(scenario: &mut Scenario, path: &str, value: &SweepValue) -> Result<()> {
    match path {
        "coupling.kappa_i_over_omega_a" => {
            scenario.coupling.kappa_i_over_omega_a = value.number(path)?;
        }
        "coupling.delta0_over_omega_a" => {
            scenario.coupling.delta0_over_omega_a = Some(value.number(path)?);
            scenario.coupling.target_fock = None;
        }
        "coupling.target_fock" => {
            let v = value.number(path)?;
            if v < 1.0 || v.fract() != 0.0 {
                bail!("coupling.target_fock must be a positive integer, got {v}");
            }
            scenario.coupling.target_fock = Some(v as usize);
            scenario.coupling.delta0_over_omega_a = None;
        }
        "coupling.kappa_over_omega_a" => {
            scenario.coupling.kappa_over_omega_a = Some(value.number(path)?);
        }
        "coupling.c2_per_ev" => {
            scenario.coupling.c2_per_ev = Some(value.number(path)?);
        }
        "resonator.beta" => {
            scenario.resonator.beta = value.number(path)?;
        }
        "initial_state.spec" => {
            let spec = value.text(path)?;
            StateSpec::parse(spec)?;
            scenario.initial_state.spec = spec.to_string();
        }
        "drive.amplitude_ev" => match &mut scenario.drive {
            Some(d) => d.amplitude_ev = value.number(path)?,
            None => bail!("drive.amplitude_ev swept but no [drive] section"),
        },
        "drive.target_mean" => match &mut scenario.drive {
            Some(d) => d.target_mean = Some(value.number(path)?),
            None => bail!("drive.target_mean swept but no [drive] section"),
        },
        "grid.t_end_fs" => match &mut scenario.grid {
            Some(g) => g.t_end_fs = value.number(path)?,
            None => bail!("grid.t_end_fs swept but no [grid] section"),
        },
        "pinem.g" => match &mut scenario.pinem {
            Some(p) => p.g = vec![value.number(path)?],
            None => bail!("pinem.g swept but no [pinem] section"),
        },
        other => bail!("unknown sweep parameter `{other}`"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
name = "t"
task = "design"

[resonator]
omega_a_ev = 1.47
beta = 5e-6

[coupling]
kind = "quadratic-loss"
target_fock = 10
c2_per_ev = 6.8027
kappa_i_over_omega_a = 0.0

[design]
n_max = 20
"#;

    #[test]
    fn minimal_scenario_parses() {
        let s = Scenario::from_toml(MINIMAL, "inline").unwrap();
        assert_eq!(s.task, Task::Design);
        let d0 = s.delta0_ev().unwrap();
        assert!((d0 - 9.0e-5 * 1.47).abs() < 1e-18);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = MINIMAL.replace("[design]", "[design]\nunknown_knob = 3");
        assert!(Scenario::from_toml(&bad, "inline").is_err());
    }

    #[test]
    fn state_specs_parse() {
        assert_eq!(StateSpec::parse("vacuum").unwrap(), StateSpec::Vacuum);
        assert_eq!(StateSpec::parse("fock:10").unwrap(), StateSpec::Fock(10));
        assert_eq!(
            StateSpec::parse("coherent:50").unwrap(),
            StateSpec::Coherent { mean: 50.0, phase: 0.0 }
        );
        assert_eq!(
            StateSpec::parse("coherent:50:0.5").unwrap(),
            StateSpec::Coherent { mean: 50.0, phase: 0.5 }
        );
        assert_eq!(StateSpec::parse("poisson:1e7").unwrap(), StateSpec::Poisson(1e7));
        assert!(StateSpec::parse("fock:1.5").is_err());
        assert!(StateSpec::parse("squeezed:2").is_err());
    }

    #[test]
    fn unknown_sweep_parameter_is_rejected() {
        let mut s = Scenario::from_toml(MINIMAL, "inline").unwrap();
        let err = apply_parameter(&mut s, "coupling.nonsense", &SweepValue::Number(1.0));
        assert!(err.is_err());
    }
}
