//! Scenario execution: sweep fan-out, per-point task runners, merged
//! summary files. Points run in parallel; outputs are written in point
//! order so identical configs produce byte-identical files regardless of
//! worker count.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;

use nbic_core::design::{classify, loss_curve, stable_photon_number, DesignPoint};
use nbic_core::dynamics::{
    evolve, evolve_diagonal, linspace, moment_closure_evolve, pump_and_ringdown, write_snapshot,
    DiagonalTrajectory, EvolveOptions, PumpMode, StorePolicy, Trajectory,
};
use nbic_core::observables::{husimi, photon_distribution, AlphaGrid};
use nbic_core::pinem::{discriminate, pinem_spectrum};
use nbic_core::scalar::cr;

use crate::scenario::{apply_parameter, Scenario, StateSpec, SweepValue, Task};

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// Worker count: CLI flag, capped by the NBIC_WORKERS environment variable.
pub fn resolve_workers(flag: Option<usize>) -> usize {
    let env_cap = std::env::var("NBIC_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v > 0);
    let requested = flag
        .or(env_cap)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    match env_cap {
        Some(cap) => requested.min(cap),
        None => requested,
    }
}

/// One sweep point: parameter assignments by (axis, value index).
#[derive(Debug, Clone)]
struct SweepPoint {
    assignments: Vec<(usize, usize)>,
}

fn expand_sweep(scenario: &Scenario) -> Vec<SweepPoint> {
    if scenario.sweep.is_empty() {
        return vec![SweepPoint { assignments: Vec::new() }];
    }
    let mut points = vec![Vec::new()];
    for (axis_idx, axis) in scenario.sweep.iter().enumerate() {
        let mut next = Vec::with_capacity(points.len() * axis.len());
        for p in &points {
            for v in 0..axis.len() {
                let mut q = p.clone();
                q.push((axis_idx, v));
                next.push(q);
            }
        }
        points = next;
    }
    points.into_iter().map(|assignments| SweepPoint { assignments }).collect()
}

/// Result of one executed point: the merged-file rows it contributes.
struct PointOutput {
    /// `(column, value)` pairs for summary rows; one row per inner Vec.
    rows: Vec<Vec<(String, String)>>,
}

pub struct RunReport {
    pub points: usize,
    pub directory: PathBuf,
}

pub fn run_scenario(
    scenario: &Scenario,
    workers: Option<usize>,
    out_override: Option<&Path>,
) -> Result<RunReport> {
    let base: PathBuf = out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&scenario.output.directory));
    fs::create_dir_all(&base)
        .with_context(|| format!("output directory {} not writable", base.display()))?;

    let points = expand_sweep(scenario);
    let workers = resolve_workers(workers).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.min(points.len().max(1)))
        .build()
        .context("building worker pool")?;

    let outputs: Vec<(Vec<(String, String)>, PointOutput)> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(idx, point)| -> Result<(Vec<(String, String)>, PointOutput)> {
                let mut sc = scenario.clone();
                let mut labels = Vec::new();
                for &(axis_idx, value_idx) in &point.assignments {
                    let axis = &scenario.sweep[axis_idx];
                    let value = SweepValue::of_axis(axis, value_idx);
                    apply_parameter(&mut sc, &axis.parameter, &value)?;
                    labels.push((axis.parameter.clone(), axis.value_label(value_idx)));
                }
                let dir = if scenario.sweep.is_empty() {
                    base.clone()
                } else {
                    let d = base.join(format!("point{idx:03}"));
                    fs::create_dir_all(&d)?;
                    d
                };
                let out = run_point(&sc, &dir)
                    .with_context(|| format!("sweep point {idx} ({labels:?})"))?;
                Ok((labels, out))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    write_merged(scenario, &base, &outputs)?;
    Ok(RunReport { points: outputs.len(), directory: base })
}

fn write_merged(
    scenario: &Scenario,
    base: &Path,
    outputs: &[(Vec<(String, String)>, PointOutput)],
) -> Result<()> {
    let file_name = match scenario.task {
        Task::Design => "design.csv",
        Task::LossProfile => "loss_curves.csv",
        _ => "summary.csv",
    };
    // The design sweep format is pinned; other tasks prepend the sweep
    // parameters as extra columns.
    let mut columns: Vec<String> = Vec::new();
    if scenario.task != Task::Design {
        for (labels, _) in outputs {
            for (k, _) in labels {
                if !columns.contains(k) {
                    columns.push(k.clone());
                }
            }
        }
    }
    for (_, out) in outputs {
        for row in &out.rows {
            for (k, _) in row {
                if !columns.contains(k) {
                    columns.push(k.clone());
                }
            }
        }
    }
    let mut f = fs::File::create(base.join(file_name))?;
    writeln!(f, "{}", columns.join(","))?;
    for (labels, out) in outputs {
        for row in &out.rows {
            let mut cells = Vec::with_capacity(columns.len());
            for col in &columns {
                let from_row = row.iter().find(|(k, _)| k == col);
                let from_label = labels.iter().find(|(k, _)| k == col);
                cells.push(
                    from_row
                        .or(from_label)
                        .map(|(_, v)| v.clone())
                        .unwrap_or_default(),
                );
            }
            writeln!(f, "{}", cells.join(","))?;
        }
    }
    Ok(())
}

fn run_point(sc: &Scenario, dir: &Path) -> Result<PointOutput> {
    match sc.task {
        Task::Evolve => run_evolve(sc, dir),
        Task::LossProfile => run_loss_profile(sc, dir),
        Task::Design => run_design(sc),
        Task::Pinem => run_pinem(sc, dir),
        Task::MomentClosure => run_moment_closure(sc, dir),
    }
}

fn design_point_of(sc: &Scenario) -> Result<DesignPoint<f64>> {
    Ok(DesignPoint {
        omega_a: sc.omega_a(),
        beta: sc.resonator.beta,
        delta0: sc.delta0_ev()?,
        kappa_i: sc.coupling.kappa_i_over_omega_a * sc.omega_a(),
        c2: sc.coupling.c2_per_ev.unwrap_or(0.0),
    })
}

fn run_design(sc: &Scenario) -> Result<PointOutput> {
    let point = design_point_of(sc)?;
    let model = sc.coupling_model()?;
    let n0 = stable_photon_number(&point).map_err(|e| anyhow!("{e}"))?;
    let class = classify(&point, &model).map_err(|e| anyhow!("{e}"))?;
    let row = vec![
        ("beta".to_string(), fmt(point.beta)),
        ("delta0_over_wa".to_string(), fmt(point.delta0 / point.omega_a)),
        ("kappa_i_over_wa".to_string(), fmt(point.kappa_i / point.omega_a)),
        ("n0".to_string(), fmt(n0)),
        ("class".to_string(), class.as_str().to_string()),
    ];
    Ok(PointOutput { rows: vec![row] })
}

fn run_loss_profile(sc: &Scenario, dir: &Path) -> Result<PointOutput> {
    let design = sc
        .design
        .as_ref()
        .ok_or_else(|| anyhow!("loss-profile needs [design].n_max"))?;
    let point = design_point_of(sc)?;
    let model = sc.coupling_model()?;
    let curve = loss_curve(&point, &model, design.n_max);
    let f = fs::File::create(dir.join("loss_curve.csv"))?;
    curve.write_csv(std::io::BufWriter::new(f))?;
    let rows = curve
        .entries
        .iter()
        .map(|&(n, k)| {
            vec![
                ("delta0_over_wa".to_string(), fmt(point.delta0 / point.omega_a)),
                ("kappa_i_over_wa".to_string(), fmt(point.kappa_i / point.omega_a)),
                ("n".to_string(), n.to_string()),
                ("kappa_ev".to_string(), fmt(k)),
            ]
        })
        .collect();
    Ok(PointOutput { rows })
}

fn trajectory_summary_row(
    records: &[nbic_core::dynamics::ObservableRecord<f64>],
) -> Vec<(String, String)> {
    let last = records.last().expect("nonempty trajectory");
    let mut min_fano = f64::INFINITY;
    let mut min_fano_t = 0.0;
    let mut min_g2 = f64::INFINITY;
    for r in records {
        if r.mean > 0.0 {
            let fano = r.var / r.mean;
            if fano < min_fano {
                min_fano = fano;
                min_fano_t = r.t_fs;
            }
        }
        if let Some(g2) = r.g2 {
            min_g2 = min_g2.min(g2);
        }
    }
    vec![
        ("final_mean".to_string(), fmt(last.mean)),
        ("final_var".to_string(), fmt(last.var)),
        ("final_g2".to_string(), last.g2.map(fmt).unwrap_or_else(|| "nan".into())),
        ("final_fidelity".to_string(), last.fidelity.map(fmt).unwrap_or_else(|| "nan".into())),
        ("min_fano".to_string(), fmt(min_fano)),
        ("min_fano_t_fs".to_string(), fmt(min_fano_t)),
        ("min_g2".to_string(), if min_g2.is_finite() { fmt(min_g2) } else { "nan".into() }),
    ]
}

fn write_probabilities_csv(
    path: &Path,
    times: &[f64],
    probs: impl Fn(usize) -> Vec<f64>,
    max_n: usize,
) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "t_fs,n,p_n")?;
    for (i, &t) in times.iter().enumerate() {
        let p = probs(i);
        for (n, &pn) in p.iter().take(max_n + 1).enumerate() {
            writeln!(f, "{},{},{}", fmt(t), n, fmt(pn))?;
        }
    }
    Ok(())
}

fn run_evolve(sc: &Scenario, dir: &Path) -> Result<PointOutput> {
    let grid_spec = sc.grid.as_ref().ok_or_else(|| anyhow!("evolve needs [grid]"))?;
    let config = sc.simulation_config()?;
    let state = sc.state_spec()?;
    let grid = linspace(0.0, grid_spec.t_end_fs, grid_spec.points);

    let wants_states = sc.observables.husimi.is_some() || !sc.observables.snapshot_times_fs.is_empty();
    let driven = !config.drive.is_none();
    let use_diagonal = match sc.integrator.path.as_str() {
        "diagonal" => {
            if driven || wants_states || !state.is_diagonal() {
                bail!("diagonal path needs an undriven, diagonal-state run without state outputs");
            }
            true
        }
        "full" => false,
        "auto" => !driven && !wants_states && state.is_diagonal(),
        other => bail!("unknown integrator.path `{other}`"),
    };

    if use_diagonal {
        let p0 = state.probabilities(config.dim);
        let traj: DiagonalTrajectory<f64> =
            evolve_diagonal(&p0, &config, &grid, sc.observables.fidelity_target)
                .map_err(|e| anyhow!("{e}"))?;
        let f = fs::File::create(dir.join("trajectory.csv"))?;
        traj.write_csv(std::io::BufWriter::new(f))?;
        if let Some(max_n) = sc.observables.photon_probabilities_max_n {
            write_probabilities_csv(
                &dir.join("probabilities.csv"),
                &traj.times_fs(),
                |i| traj.probs[i].clone(),
                max_n.min(config.dim - 1),
            )?;
        }
        return Ok(PointOutput { rows: vec![trajectory_summary_row(&traj.records)] });
    }

    let opts = EvolveOptions {
        fidelity_target: sc.observables.fidelity_target,
        store: if wants_states || sc.observables.photon_probabilities_max_n.is_some() {
            StorePolicy::Every(1)
        } else {
            StorePolicy::Final
        },
        method: sc.method()?,
    };

    let traj: Trajectory<f64> = if driven {
        let target = sc.drive.as_ref().and_then(|d| d.target_mean);
        pump_and_ringdown(
            &config,
            PumpMode::Pulse { target_mean: target },
            grid_spec.t_end_fs,
            grid_spec.points,
            &opts,
        )
        .map_err(|e| anyhow!("{e}"))?
    } else {
        let rho0 = state
            .density_matrix(config.dim, sc.truncation.tail_tol)
            .map_err(|e| anyhow!("{e}"))?;
        evolve(&rho0, &config, &grid, &opts).map_err(|e| anyhow!("{e}"))?
    };

    let f = fs::File::create(dir.join("trajectory.csv"))?;
    traj.write_csv(std::io::BufWriter::new(f))?;

    if let Some(max_n) = sc.observables.photon_probabilities_max_n {
        let times = traj.times_fs();
        let stored: Vec<(f64, Vec<f64>)> = traj
            .states
            .iter()
            .map(|(i, s)| (times[*i], photon_distribution(s)))
            .collect();
        let stored_times: Vec<f64> = stored.iter().map(|(t, _)| *t).collect();
        write_probabilities_csv(
            &dir.join("probabilities.csv"),
            &stored_times,
            |row| stored[row].1.clone(),
            max_n.min(config.dim - 1),
        )?;
    }

    let times = traj.times_fs();
    let nearest_states = |wanted: &[f64]| -> Result<Vec<&(usize, nbic_core::fockspace::DensityMatrix<f64>)>> {
        let mut picked: Vec<&(usize, _)> = Vec::new();
        for &t in wanted {
            let best = traj
                .states
                .iter()
                .min_by(|a, b| {
                    let da = (times[a.0] - t).abs();
                    let db = (times[b.0] - t).abs();
                    da.partial_cmp(&db).unwrap()
                })
                .ok_or_else(|| anyhow!("state output requested but no states were stored"))?;
            if !picked.iter().any(|(i, _)| *i == best.0) {
                picked.push(best);
            }
        }
        Ok(picked)
    };
    if let Some(h) = &sc.observables.husimi {
        for (idx, state) in nearest_states(&h.times_fs)? {
            let grid = AlphaGrid::centered(h.radius, h.points);
            let q = husimi(state, &grid);
            let f = fs::File::create(dir.join(format!("husimi_t{}.csv", times[*idx])))?;
            q.write_csv(std::io::BufWriter::new(f))?;
        }
    }
    for (idx, state) in nearest_states(&sc.observables.snapshot_times_fs)? {
        write_snapshot(dir, times[*idx], state).map_err(|e| anyhow!("{e}"))?;
    }

    Ok(PointOutput { rows: vec![trajectory_summary_row(&traj.records)] })
}

fn run_pinem(sc: &Scenario, dir: &Path) -> Result<PointOutput> {
    let p = sc.pinem.as_ref().ok_or_else(|| anyhow!("pinem task needs [pinem]"))?;
    let states = if p.states.is_empty() {
        vec![sc.initial_state.spec.clone()]
    } else {
        p.states.clone()
    };
    let tail = sc.truncation.tail_tol;

    let mut rows = Vec::new();
    let mut spectra = Vec::new();
    for state_text in &states {
        let spec = StateSpec::parse(state_text)?;
        let dim = sc
            .truncation
            .dim
            .unwrap_or(spec.required_dim(tail.min(1e-9)) + p.k_max)
            .max(p.k_max + 2);
        let rho = spec.density_matrix(dim, tail)?;
        for &g in &p.g {
            let spectrum = pinem_spectrum(&rho, cr(g), p.k_max).map_err(|e| anyhow!("{e}"))?;
            let name = format!("pinem_{}_g{}.csv", state_text.replace(':', "_"), g);
            let f = fs::File::create(dir.join(name))?;
            spectrum.write_csv(std::io::BufWriter::new(f), state_text)?;
            rows.push(vec![
                ("state".to_string(), state_text.clone()),
                ("g".to_string(), fmt(g)),
                ("p0".to_string(), fmt(spectrum.prob(0))),
                ("total".to_string(), fmt(spectrum.total())),
            ]);
            spectra.push((state_text.clone(), g, spectrum));
        }
    }

    // Pairwise discrimination at matching g.
    let mut f = std::io::BufWriter::new(fs::File::create(dir.join("discrimination.csv"))?);
    writeln!(f, "state_a,state_b,g,total_variation")?;
    for i in 0..spectra.len() {
        for j in i + 1..spectra.len() {
            let (sa, ga, pa) = &spectra[i];
            let (sb, gb, pb) = &spectra[j];
            if ga != gb {
                continue;
            }
            let d = discriminate(pa, pb).map_err(|e| anyhow!("{e}"))?;
            writeln!(f, "{sa},{sb},{},{}", fmt(*ga), fmt(d))?;
        }
    }
    Ok(PointOutput { rows })
}

fn run_moment_closure(sc: &Scenario, dir: &Path) -> Result<PointOutput> {
    let grid_spec = sc.grid.as_ref().ok_or_else(|| anyhow!("moment-closure needs [grid]"))?;
    let config = sc.simulation_config()?;
    let state = sc.state_spec()?;
    let (mean0, var0) = match state {
        StateSpec::Poisson(m) | StateSpec::Coherent { mean: m, .. } => (m, m),
        StateSpec::Fock(n) => (n as f64, 0.0),
        StateSpec::Vacuum => bail!("moment closure needs a populated initial state"),
    };
    let grid = linspace(0.0, grid_spec.t_end_fs, grid_spec.points);
    let traj = moment_closure_evolve(mean0, var0, &config, &grid).map_err(|e| anyhow!("{e}"))?;
    let f = fs::File::create(dir.join("closure.csv"))?;
    traj.write_csv(std::io::BufWriter::new(f))?;

    let mut peak_db = f64::INFINITY;
    let mut peak_t = 0.0;
    for i in 0..traj.times_fs.len() {
        if traj.mean[i] > 1.0 && traj.var[i] > 0.0 {
            let db = 10.0 * (traj.var[i] / traj.mean[i]).log10();
            if db < peak_db {
                peak_db = db;
                peak_t = traj.times_fs[i];
            }
        }
    }
    Ok(PointOutput {
        rows: vec![vec![
            ("peak_squeezing_db".to_string(), fmt(-peak_db)),
            ("t_peak_fs".to_string(), fmt(peak_t)),
            ("closure_warning".to_string(), traj.any_warning().to_string()),
        ]],
    })
}
