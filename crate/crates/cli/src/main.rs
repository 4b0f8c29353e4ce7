//! `nbic` - simulator and design tool for Kerr resonators with
//! photon-number-dependent radiation loss.
//!
//! Exit codes: 0 success, 2 configuration/schema error, 3 runtime accuracy
//! or integrator failure.

mod run;
mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use nbic_core::design::{classify, detuning_for_fock, stable_photon_number, DesignPoint};
use nbic_core::pinem::pinem_spectrum;
use nbic_core::scalar::cr;

use scenario::{Scenario, StateSpec};

/// Built-in scenario presets reproducing the headline figures; shipped as
/// data files under `crates/cli/presets/` and embedded in the binary.
const PRESETS: &[(&str, &str)] = &[
    ("fig2_loss_curves", include_str!("../presets/fig2_loss_curves.toml")),
    ("fig3_trajectories", include_str!("../presets/fig3_trajectories.toml")),
    ("fig4b_pump_ringdown", include_str!("../presets/fig4b_pump_ringdown.toml")),
    ("fig4c_fock10", include_str!("../presets/fig4c_fock10.toml")),
    ("fig4c_failed_fock", include_str!("../presets/fig4c_failed_fock.toml")),
    ("fig4d_squeezing_vs_loss", include_str!("../presets/fig4d_squeezing_vs_loss.toml")),
    ("fig5a_g2", include_str!("../presets/fig5a_g2.toml")),
    ("fig5b_pinem", include_str!("../presets/fig5b_pinem.toml")),
    ("fig6_macroscopic", include_str!("../presets/fig6_macroscopic.toml")),
];

/// Short aliases for often-used presets.
const PRESET_ALIASES: &[(&str, &str)] = &[("fock10", "fig4c_fock10"), ("failed_fock", "fig4c_failed_fock")];

#[derive(Parser)]
#[command(name = "nbic", version, about = "n-photon bound-state-in-the-continuum resonator toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario file (including its sweep axes, if any).
    Run(RunArgs),
    /// Execute a scenario that must carry sweep axes, in parallel.
    Sweep(RunArgs),
    /// Time-evolve a state (scenario or preset driven).
    Evolve(EvolveArgs),
    /// Loss-versus-photon-number table for a design.
    LossProfile(LossProfileArgs),
    /// Detuning solver and regime classification.
    Design(DesignArgs),
    /// Electron energy-gain/loss spectrum of a cavity state.
    Pinem(PinemArgs),
    /// List the built-in presets.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML) or preset name.
    scenario: String,
    /// Cap on parallel sweep workers (NBIC_WORKERS also applies).
    #[arg(long)]
    workers: Option<usize>,
    /// Override the scenario's output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvolveArgs {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in preset name (see `nbic presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Replace the initial state with `coherent:<MEAN>` (skip any pulse).
    #[arg(long)]
    preload: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LossProfileArgs {
    /// Scenario file or preset name; omit to use the direct flags below.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, default_value_t = 1.47)]
    omega_a: f64,
    #[arg(long, default_value_t = 5e-6)]
    beta: f64,
    /// Loss-zero photon number (sets the detuning).
    #[arg(long)]
    target_fock: Option<usize>,
    /// Loss-zero detuning over omega_a (alternative to --target-fock).
    #[arg(long)]
    delta0: Option<f64>,
    /// Curvature of Re K_l at the zero (1/eV).
    #[arg(long, default_value_t = 6.802721088435375)]
    c2: f64,
    /// Background loss over omega_a.
    #[arg(long, default_value_t = 0.0)]
    kappa_i: f64,
    #[arg(long, default_value_t = 60)]
    n_max: usize,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DesignArgs {
    /// Target Fock order: prints the detuning that stabilizes it.
    #[arg(long)]
    target_fock: Option<usize>,
    /// Detuning over omega_a: prints the stable photon number and class.
    #[arg(long)]
    delta0: Option<f64>,
    #[arg(long, default_value_t = 5e-6)]
    beta: f64,
    #[arg(long, default_value_t = 1.47)]
    omega_a: f64,
    #[arg(long, default_value_t = 6.802721088435375)]
    c2: f64,
    #[arg(long, default_value_t = 0.0)]
    kappa_i: f64,
}

#[derive(Args)]
struct PinemArgs {
    /// Cavity state, e.g. `fock:10` or `coherent:100`.
    #[arg(long)]
    state: String,
    /// Electron-photon coupling magnitude.
    #[arg(long)]
    g: f64,
    /// Electron ladder half-width; defaults to the state dimension - 1.
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long, default_value_t = 1e-9)]
    tail_tol: f64,
    /// Output CSV path.
    #[arg(short, long, default_value = "pinem.csv")]
    out: PathBuf,
}

fn preset_text(name: &str) -> Option<&'static str> {
    let canonical = PRESET_ALIASES
        .iter()
        .find(|(alias, _)| *alias == name)
        .map(|(_, target)| *target)
        .unwrap_or(name);
    PRESETS.iter().find(|(n, _)| *n == canonical).map(|(_, text)| *text)
}

fn load_scenario(spec: &str) -> Result<Scenario> {
    if let Some(text) = preset_text(spec) {
        return Scenario::from_toml(text, &format!("preset {spec}"));
    }
    let path = Path::new(spec);
    if !path.exists() {
        bail!("`{spec}` is neither a readable file nor a preset name (see `nbic presets`)");
    }
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    Scenario::from_toml(&text, &path.display().to_string())
}

fn cmd_run(args: &RunArgs, require_sweep: bool) -> Result<()> {
    let scenario = load_scenario(&args.scenario)?;
    if require_sweep && scenario.sweep.is_empty() {
        bail!("`nbic sweep` needs a scenario with at least one [[sweep]] axis");
    }
    let report = run::run_scenario(&scenario, args.workers, args.out.as_deref())?;
    println!(
        "{}: {} point(s) written to {}",
        scenario.name,
        report.points,
        report.directory.display()
    );
    Ok(())
}

fn cmd_evolve(args: &EvolveArgs) -> Result<()> {
    let source = match (&args.scenario, &args.preset) {
        (Some(path), None) => path.display().to_string(),
        (None, Some(name)) => name.clone(),
        _ => bail!("evolve needs exactly one of --scenario or --preset"),
    };
    let mut scenario = load_scenario(&source)?;
    if scenario.task != scenario::Task::Evolve {
        bail!("`{source}` is not an evolve scenario");
    }
    if let Some(mean) = args.preload {
        scenario.initial_state.spec = format!("coherent:{mean}");
        scenario.drive = None;
        scenario.truncation.dim = None;
    }
    let report = run::run_scenario(&scenario, args.workers, args.out.as_deref())?;
    println!(
        "{}: {} point(s) written to {}",
        scenario.name,
        report.points,
        report.directory.display()
    );
    Ok(())
}

fn cmd_loss_profile(args: &LossProfileArgs) -> Result<()> {
    if let Some(source) = &args.scenario {
        let scenario = load_scenario(source)?;
        if scenario.task != scenario::Task::LossProfile {
            bail!("`{source}` is not a loss-profile scenario");
        }
        let report = run::run_scenario(&scenario, None, args.out.as_deref())?;
        println!("{} point(s) written to {}", report.points, report.directory.display());
        return Ok(());
    }
    let delta0 = match (args.target_fock, args.delta0) {
        (Some(n0), None) => detuning_for_fock(n0, args.omega_a, args.beta),
        (None, Some(r)) => r * args.omega_a,
        _ => bail!("need exactly one of --target-fock or --delta0"),
    };
    let point = DesignPoint {
        omega_a: args.omega_a,
        beta: args.beta,
        delta0,
        kappa_i: args.kappa_i * args.omega_a,
        c2: args.c2,
    };
    let curve = nbic_core::design::loss_curve(&point, &point.coupling(), args.n_max);
    match &args.out {
        Some(path) => {
            let f = std::fs::File::create(path)?;
            curve.write_csv(std::io::BufWriter::new(f))?;
            println!(
                "wrote {} (minimum kappa {:e} eV at n = {})",
                path.display(),
                curve.min_kappa,
                curve.min_n
            );
        }
        None => {
            curve.write_csv(std::io::stdout().lock())?;
        }
    }
    Ok(())
}

fn cmd_design(args: &DesignArgs) -> Result<()> {
    match (args.target_fock, args.delta0) {
        (Some(n0), None) => {
            let delta0 = detuning_for_fock(n0, args.omega_a, args.beta);
            println!(
                "delta0 = {:e} * omega_a = {:e} eV (stabilizes n0 = {n0})",
                delta0 / args.omega_a,
                delta0
            );
            Ok(())
        }
        (None, Some(ratio)) => {
            let point = DesignPoint {
                omega_a: args.omega_a,
                beta: args.beta,
                delta0: ratio * args.omega_a,
                kappa_i: args.kappa_i * args.omega_a,
                c2: args.c2,
            };
            let n0 = stable_photon_number(&point).map_err(|e| anyhow!("{e}"))?;
            let class = classify(&point, &point.coupling()).map_err(|e| anyhow!("{e}"))?;
            println!("n0 = {n0} ({})", class.as_str());
            Ok(())
        }
        _ => bail!("need exactly one of --target-fock or --delta0"),
    }
}

fn cmd_pinem(args: &PinemArgs) -> Result<()> {
    let spec = StateSpec::parse(&args.state)?;
    let base_dim = spec.required_dim(args.tail_tol.min(1e-9));
    let k_max = args.k_max.unwrap_or(base_dim.saturating_sub(1).max(1));
    let dim = base_dim + k_max;
    let rho = spec.density_matrix(dim, args.tail_tol)?;
    let spectrum = pinem_spectrum(&rho, cr(args.g), k_max).map_err(|e| anyhow!("{e}"))?;
    let f = std::fs::File::create(&args.out)?;
    spectrum.write_csv(std::io::BufWriter::new(f), &args.state)?;
    println!(
        "wrote {} (k in [-{k_max}, {k_max}], total probability {:e})",
        args.out.display(),
        spectrum.total()
    );
    Ok(())
}

fn cmd_presets() {
    for (name, text) in PRESETS {
        let first_line = text
            .lines()
            .find(|l| l.starts_with("# "))
            .unwrap_or("#")
            .trim_start_matches("# ");
        println!("{name:26} {first_line}");
    }
    for (alias, target) in PRESET_ALIASES {
        println!("{alias:26} alias for {target}");
    }
}

/// 3 for runtime accuracy/integrator failures, 2 for everything else
/// (configuration, schema, i/o).
fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<nbic_core::Error>() {
            match core {
                nbic_core::Error::Accuracy { .. } | nbic_core::Error::Integrator { .. } => return 3,
                _ => return 2,
            }
        }
        // Errors stringified at module boundaries still carry the marker.
        let text = cause.to_string();
        if text.starts_with("accuracy failure") || text.starts_with("integrator failure") {
            return 3;
        }
    }
    2
}


fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args, false),
        Command::Sweep(args) => cmd_run(args, true),
        Command::Evolve(args) => cmd_evolve(args),
        Command::LossProfile(args) => cmd_loss_profile(args),
        Command::Design(args) => cmd_design(args),
        Command::Pinem(args) => cmd_pinem(args),
        Command::Presets => {
            cmd_presets();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
