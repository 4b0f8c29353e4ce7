//! End-to-end tests of the `nbic` binary: presets, determinism, sweep
//! worker-count invariance, exit codes, and the documented output formats.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn nbic() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nbic"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nbic_cli_{tag}_{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn loss_curves_preset_reproduces_the_minimum() {
    let dir = tmp_dir("fig2");
    let status = nbic().args(["run", "fig2_loss_curves", "-o"]).arg(&dir).status().unwrap();
    assert!(status.success());

    let rows = read_csv(&dir.join("loss_curves.csv"));
    let header = &rows[0];
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    // Filter on the sweep label columns (exact strings by construction).
    let (c_d, c_ki, c_n, c_k) = (
        col("coupling.delta0_over_omega_a"),
        col("coupling.kappa_i_over_omega_a"),
        col("n"),
        col("kappa_ev"),
    );

    // Ideal-BIC family at delta0 = 9.4e-5 wa: sharp minimum near n = 10.
    let family: Vec<(usize, f64)> = rows[1..]
        .iter()
        .filter(|r| r[c_d] == "9.4e-5" && r[c_ki] == "0e0")
        .map(|r| (r[c_n].parse().unwrap(), r[c_k].parse().unwrap()))
        .collect();
    assert_eq!(family.len(), 60);
    let (min_n, min_k) = family
        .iter()
        .copied()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    // delta_1 = 0.0094 gamma places the zero at n0 = 10.4 ("roughly 10"):
    // the discrete minimum sits beside it with kappa ~ a (0.4)^2.
    assert!((10..=11).contains(&min_n), "minimum at n = {min_n}");
    assert!(min_k < 5e-10, "kappa at the minimum: {min_k}");

    // With kappa_i = 1e-7 wa the minimum value is kappa_i.
    let lossy_min = rows[1..]
        .iter()
        .filter(|r| r[c_d] == "9.4e-5" && r[c_ki] == "1e-7")
        .map(|r| r[c_k].parse::<f64>().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert!((lossy_min - 1e-7 * 1.47).abs() < 5e-10, "lossy minimum {lossy_min}");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn identical_runs_are_byte_identical_and_worker_invariant() {
    let dir1 = tmp_dir("det1");
    let dir2 = tmp_dir("det2");
    let dir4 = tmp_dir("det4");
    // Serial, serial again, then four workers.
    for (dir, workers) in [(&dir1, "1"), (&dir2, "1"), (&dir4, "4")] {
        let status = nbic()
            .args(["sweep", "fig2_loss_curves", "--workers", workers, "-o"])
            .arg(dir)
            .env("NBIC_WORKERS", "8")
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = fs::read(dir1.join("loss_curves.csv")).unwrap();
    let b = fs::read(dir2.join("loss_curves.csv")).unwrap();
    let c = fs::read(dir4.join("loss_curves.csv")).unwrap();
    assert_eq!(a, b, "two serial runs differ");
    assert_eq!(a, c, "worker count changed the output");
    for dir in [dir1, dir2, dir4] {
        fs::remove_dir_all(&dir).ok();
    }
}

#[test]
fn design_subcommand_prints_the_detuning() {
    let out = nbic()
        .args(["design", "--target-fock", "10", "--beta", "5e-6"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("9.000000000000002e-5") || text.contains("9e-5"), "stdout: {text}");

    // Inverse direction with classification.
    let out = nbic()
        .args(["design", "--delta0", "9e-5", "--beta", "5e-6", "--kappa-i", "1e-7"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("n0 = 10") && text.contains("fock_capable"), "stdout: {text}");
}

#[test]
fn pinem_subcommand_writes_a_normalized_spectrum() {
    let dir = tmp_dir("pinem");
    let csv = dir.join("spec.csv");
    let status = nbic()
        .args(["pinem", "--state", "fock:10", "--g", "0.1", "-o"])
        .arg(&csv)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("# g_re="));
    assert!(text.contains("# state=fock:10"));
    let rows = read_csv(&csv);
    assert_eq!(rows[0], vec!["k", "P_k"]);
    let total: f64 = rows[1..].iter().map(|r| r[1].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-8, "total {total}");
    // No gain beyond 10 quanta.
    for r in &rows[1..] {
        let k: i64 = r[0].parse().unwrap();
        let p: f64 = r[1].parse().unwrap();
        if k > 10 {
            assert!(p <= 1e-12);
        }
    }
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn evolve_preset_preload_reaches_the_fock_state() {
    let dir = tmp_dir("fock10");
    let status = nbic()
        .args(["evolve", "--preset", "fock10", "--preload", "50", "-o"])
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    let rows = read_csv(&dir.join("trajectory.csv"));
    assert_eq!(
        rows[0],
        vec!["t_fs", "mean_n", "var_n", "squeezing_db", "g2", "fidelity_n0", "trace_defect"]
    );
    let last = rows.last().unwrap();
    let fidelity: f64 = last[5].parse().unwrap();
    assert!(fidelity >= 0.99, "final fidelity {fidelity}");
    // probabilities.csv is present with the requested Fock window.
    let probs = read_csv(&dir.join("probabilities.csv"));
    assert_eq!(probs[0], vec!["t_fs", "n", "p_n"]);
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn schema_violations_exit_with_code_2() {
    let dir = tmp_dir("bad");
    // Unknown field.
    let bad = dir.join("bad_field.toml");
    fs::write(
        &bad,
        "schema_version = 1\nname = \"x\"\ntask = \"design\"\nnonsense = 1\n\
         [resonator]\nomega_a_ev = 1.0\nbeta = 1e-6\n\
         [coupling]\nkind = \"quadratic-loss\"\ntarget_fock = 5\nc2_per_ev = 1.0\n\
         [design]\nn_max = 5\n",
    )
    .unwrap();
    let out = nbic().arg("run").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("nonsense"), "diagnostics should name the field: {stderr}");

    // Unknown sweep parameter.
    let bad_sweep = dir.join("bad_sweep.toml");
    fs::write(
        &bad_sweep,
        "schema_version = 1\nname = \"x\"\ntask = \"design\"\n\
         [resonator]\nomega_a_ev = 1.0\nbeta = 1e-6\n\
         [coupling]\nkind = \"quadratic-loss\"\ntarget_fock = 5\nc2_per_ev = 1.0\n\
         [design]\nn_max = 5\n\
         [[sweep]]\nparameter = \"coupling.does_not_exist\"\nvalues = [1.0]\n",
    )
    .unwrap();
    let out = nbic().arg("run").arg(&bad_sweep).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Unparseable TOML.
    let garbled = dir.join("garbled.toml");
    fs::write(&garbled, "this is not toml [").unwrap();
    let out = nbic().arg("run").arg(&garbled).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn accuracy_failures_exit_with_code_3() {
    let dir = tmp_dir("acc");
    let scenario = dir.join("impossible_budget.toml");
    fs::write(
        &scenario,
        format!(
            "schema_version = 1\nname = \"impossible\"\ntask = \"evolve\"\n\
             [resonator]\nomega_a_ev = 1.47\nbeta = 5e-6\n\
             [coupling]\nkind = \"quadratic-loss\"\ntarget_fock = 3\nc2_per_ev = 6.8\n\
             [initial_state]\nspec = \"coherent:3\"\n\
             [integrator]\nrel_tol = 1e-6\nabs_tol = 1e-9\ntrace_budget_per_time = 1e-30\n\
             method = \"adaptive-rk\"\npath = \"full\"\nframe = \"rotating\"\n\
             [grid]\nt_end_fs = 3e6\npoints = 4\n\
             [output]\ndirectory = \"{}\"\n",
            dir.join("out").display()
        ),
    )
    .unwrap();
    let out = nbic().arg("run").arg(&scenario).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn sweep_requires_axes() {
    let status = nbic().args(["sweep", "fig4c_fock10"]).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
}

#[test]
fn pump_scenario_calibrates_and_rings_down() {
    // Reduced pump-and-ringdown: 12-photon target, small basis, short tail.
    let dir = tmp_dir("pump");
    let scenario = dir.join("pump.toml");
    fs::write(
        &scenario,
        format!(
            "schema_version = 1\nname = \"pump_small\"\ntask = \"evolve\"\n\
             [resonator]\nomega_a_ev = 1.47\nbeta = 5e-6\n\
             [coupling]\nkind = \"quadratic-loss\"\ntarget_fock = 4\nc2_per_ev = 6.802721088435374\n\
             [initial_state]\nspec = \"vacuum\"\n\
             [truncation]\ntail_tol = 1e-10\ndim = 34\n\
             [integrator]\nrel_tol = 1e-9\nabs_tol = 1e-12\ntrace_budget_per_time = 1e-9\n\
             method = \"auto\"\npath = \"auto\"\nframe = \"rotating\"\n\
             [drive]\nkind = \"gaussian-pulse\"\namplitude_ev = 0.1\ncenter_fs = 20.0\nfwhm_fs = 10.0\n\
             carrier_ev = 1.47\ntarget_mean = 12.0\n\
             [grid]\nt_end_fs = 3e5\npoints = 33\n\
             [observables]\nfidelity_target = 4\n\
             [output]\ndirectory = \"{}\"\n",
            dir.join("out").display()
        ),
    )
    .unwrap();
    let status = nbic().arg("run").arg(&scenario).status().unwrap();
    assert!(status.success());
    let rows = read_csv(&dir.join("out").join("trajectory.csv"));
    // Find the pulse-end record (t = 55 fs) and check the calibrated mean.
    let post_pulse = rows[1..]
        .iter()
        .find(|r| (r[0].parse::<f64>().unwrap() - 55.0).abs() < 1e-6)
        .expect("pulse boundary record");
    let mean: f64 = post_pulse[1].parse().unwrap();
    assert!((mean - 12.0).abs() <= 0.12, "calibrated mean {mean}");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn design_sweep_csv_has_the_pinned_columns() {
    let dir = tmp_dir("design_sweep");
    let scenario = dir.join("design.toml");
    fs::write(
        &scenario,
        format!(
            "schema_version = 1\nname = \"design_sweep\"\ntask = \"design\"\n\
             [resonator]\nomega_a_ev = 1.47\nbeta = 5e-6\n\
             [coupling]\nkind = \"quadratic-loss\"\ntarget_fock = 10\nc2_per_ev = 6.802721088435374\n\
             [design]\nn_max = 20\n\
             [output]\ndirectory = \"{}\"\n\
             [[sweep]]\nparameter = \"resonator.beta\"\nvalues = [1e-6, 5e-6]\n\
             [[sweep]]\nparameter = \"coupling.kappa_i_over_omega_a\"\nvalues = [0.0, 1e-7, 1e-3]\n",
            dir.join("out").display()
        ),
    )
    .unwrap();
    let status = nbic().arg("run").arg(&scenario).status().unwrap();
    assert!(status.success());
    let rows = read_csv(&dir.join("out").join("design.csv"));
    assert_eq!(rows[0], vec!["beta", "delta0_over_wa", "kappa_i_over_wa", "n0", "class"]);
    assert_eq!(rows.len(), 7); // header + 6 sweep points
    // target_fock keeps n0 = 10 across beta values; classes vary with loss.
    for r in &rows[1..] {
        let n0: f64 = r[3].parse().unwrap();
        assert!((n0 - 10.0).abs() < 1e-9);
    }
    let classes: Vec<&str> = rows[1..].iter().map(|r| r[4].as_str()).collect();
    assert!(classes.contains(&"fock_capable"));
    assert!(classes.contains(&"washed_out"));
    fs::remove_dir_all(&dir).ok();
}
