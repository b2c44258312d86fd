use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mqs_core::trajectory::Trajectory;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_mqs-bench");

/// Linear slab with a diffusion time well above the step; `dt_factor = 0.5`
/// keeps every explicit amplification factor in `[0.1, 1)`, so no mode
/// oscillates and the probes must rise monotonically.
const SLAB: &str = "\
problem.kind = slab
problem.n_cells = 64
problem.kappa = 1e5
problem.source.amplitude = 1e6
problem.source.tau = 2e-3
solver.t_end = 4e-3
solver.dt_factor = 0.5
output.stride = 20
";

const PLATE: &str = "\
problem.kind = plate
problem.nx = 20
problem.ny = 20
problem.material = brauer
problem.source.amplitude = 2e7
solver.t_end = 3e-3
";

fn bench(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--quiet")
        .output()
        .expect("binary runs")
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run_ok(args: &[&str]) -> Output {
    let out = bench(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn metadata_value(dir: &Path, key: &str) -> String {
    let text = fs::read_to_string(dir.join("metadata.txt")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")).map(str::to_string))
        .unwrap_or_else(|| panic!("{key} missing"))
}

#[test]
fn slab_run_writes_rising_probes_and_metadata() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(tmp.path(), "slab.cfg", SLAB);
    let out = tmp.path().join("o");
    run_ok(&["run", "--config", s(&cfg), "--out", s(&out)]);

    let traj = Trajectory::read_csv(out.join("trajectory.csv")).unwrap();
    assert_eq!(traj.probe_names, ["slab_center", "slab_quarter"]);
    assert!(traj.len() > 10);
    assert_eq!(*traj.times.last().unwrap(), 4e-3);
    for p in 0..2 {
        let v = traj.series(p);
        assert!(v.windows(2).all(|w| w[1] >= w[0]), "probe {p} not monotone: {v:?}");
        assert!(*v.last().unwrap() > 0.0);
    }

    let steps = fs::read_to_string(out.join("steps.csv")).unwrap();
    assert!(steps.starts_with("step,t,rhs_family,pcg_iters,subspace_cols\n"));
    for family in ["source", "coupling", "mass"] {
        assert!(steps.contains(&format!(",{family},")));
    }

    let dt_max: f64 = metadata_value(&out, "derived.dt_max").parse().unwrap();
    let dt: f64 = metadata_value(&out, "derived.dt").parse().unwrap();
    assert_eq!(dt, 0.5 * dt_max);
    assert_eq!(metadata_value(&out, "derived.version"), env!("CARGO_PKG_VERSION"));
    assert_eq!(metadata_value(&out, "problem.kappa"), "1e5");
    assert_eq!(metadata_value(&out, "solver.kind"), "explicit_schur");
    // the metadata file is itself a valid config
    run_ok(&[
        "run",
        "--config",
        s(&out.join("metadata.txt")),
        "--out",
        s(&tmp.path().join("again")),
    ]);
    assert_eq!(
        fs::read(out.join("trajectory.csv")).unwrap(),
        fs::read(tmp.path().join("again/trajectory.csv")).unwrap()
    );
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(tmp.path(), "plate.cfg", PLATE);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        run_ok(&["run", "--config", s(&cfg), "--out", s(out), "--seed", "11"]);
    }
    for f in ["trajectory.csv", "steps.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(metadata_value(&a, "seed"), "11");
}

#[test]
fn explicit_and_implicit_agree_on_linear_slab() {
    let tmp = TempDir::new().unwrap();
    let ex = write_cfg(tmp.path(), "ex.cfg", SLAB);
    let im = write_cfg(
        tmp.path(),
        "im.cfg",
        &format!("{SLAB}solver.kind = implicit_euler\n").replace("solver.dt_factor = 0.5\n", ""),
    );
    let (a, b) = (tmp.path().join("ex"), tmp.path().join("im"));
    run_ok(&["run", "--config", s(&ex), "--out", s(&a)]);
    run_ok(&["run", "--config", s(&im), "--out", s(&b)]);
    assert_eq!(metadata_value(&b, "solver.dt_factor"), "1e-1");
    let steps = fs::read_to_string(b.join("steps.csv")).unwrap();
    assert!(steps.lines().nth(1).unwrap().contains(",newton,"));

    let cmp = run_ok(&[
        "compare",
        s(&a.join("trajectory.csv")),
        s(&b.join("trajectory.csv")),
        "--tol",
        "0.01",
    ]);
    assert!(String::from_utf8_lossy(&cmp.stdout).contains("PASS"));
}

#[test]
fn bad_configs_exit_2_with_the_line() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        ("solver.t_end = 1\n# ok\nstepper.n_cg_acc = -1\n", ":3: "),
        ("solver.t_end = 1\nsolver.bogus = 1\n", ":2: unknown key"),
        ("problem.kind = cylinder\nsolver.t_end = 1\n", ":1: "),
    ];
    for (text, needle) in cases {
        let cfg = write_cfg(tmp.path(), "bad.cfg", text);
        let out = bench(&["run", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
        assert_eq!(out.status.code(), Some(2), "{text:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(&format!("bad.cfg{needle}")), "{err}");
    }
    let missing = bench(&["run", "--config", "/nonexistent/x.cfg"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_1() {
    let tmp = TempDir::new().unwrap();
    // ten times the stability bound
    let text = SLAB
        .replace("solver.dt_factor = 0.5", "solver.dt = 2e-5")
        .replace("solver.t_end = 4e-3", "solver.t_end = 1e-1");
    let cfg = write_cfg(tmp.path(), "unstable.cfg", &text);
    let out = bench(&["run", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("CFL violation"));
}

#[test]
fn compare_reports_scaled_copies() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(tmp.path(), "slab.cfg", SLAB);
    let out = tmp.path().join("o");
    run_ok(&["run", "--config", s(&cfg), "--out", s(&out)]);
    let a = out.join("trajectory.csv");

    let same = run_ok(&["compare", s(&a), s(&a), "--tol", "0"]);
    assert!(String::from_utf8_lossy(&same.stdout).contains("PASS: max deviation 0.000000e0"));

    let mut scaled = Trajectory::read_csv(&a).unwrap();
    for row in &mut scaled.values {
        row.iter_mut().for_each(|v| *v *= 1.05);
    }
    let b = tmp.path().join("scaled.csv");
    scaled.write_csv(&b).unwrap();
    let fail = bench(&["compare", s(&b), s(&a), "--tol", "0.01"]);
    assert_eq!(fail.status.code(), Some(1));
    let report = String::from_utf8_lossy(&fail.stdout);
    assert!(report.contains("FAIL: max deviation 5.000000e-2"), "{report}");

    let mut renamed = Trajectory::read_csv(&a).unwrap();
    renamed.probe_names[0] = "other".into();
    let c = tmp.path().join("renamed.csv");
    renamed.write_csv(&c).unwrap();
    assert_eq!(bench(&["compare", s(&c), s(&a)]).status.code(), Some(2));
}

fn sweep_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(Result::unwrap).collect()
}

fn sweep_without_wall(path: &Path) -> String {
    let mut r = csv::Reader::from_path(path).unwrap();
    let wall = r.headers().unwrap().iter().position(|h| h == "wall_seconds").unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            rec.iter()
                .enumerate()
                .filter(|(i, _)| *i != wall)
                .map(|(_, v)| v)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn single_cell_sweep_has_three_rows() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "s.cfg",
        &format!("{SLAB}sweep.tol_pcg = 1e-6\nsweep.n_cg_acc = 3\n"),
    );
    let out = tmp.path().join("o");
    run_ok(&["sweep", "--config", s(&cfg), "--out", s(&out)]);
    let rows = sweep_rows(&out.join("sweep.csv"));
    let kinds: Vec<&str> = rows.iter().map(|r| &r[1]).collect();
    assert_eq!(kinds, ["cspe", "baseline_previous", "baseline_zero"]);
    assert!(rows.iter().all(|r| &r[4] == "ok"));
}

#[test]
fn paper_grid_sweep() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(tmp.path(), "p.cfg", PLATE);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&["sweep", "--config", s(&cfg), "--out", s(&a), "--threads", "2"]);
    run_ok(&["sweep", "--config", s(&cfg), "--out", s(&b), "--threads", "2"]);
    let path = a.join("sweep.csv");
    assert_eq!(sweep_without_wall(&path), sweep_without_wall(&b.join("sweep.csv")));

    let mut reader = csv::Reader::from_path(&path).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(str::to_string).collect();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    for name in [
        "avg_iters_source",
        "avg_iters_coupling",
        "avg_iters_mass",
        "max_subspace_cols",
        "wall_seconds",
    ] {
        col(name);
    }
    let rows = sweep_rows(&path);
    assert_eq!(rows.len(), 11);
    assert!(rows.iter().all(|r| &r[col("status")] == "ok"));
    assert!(rows
        .iter()
        .all(|r| r[col("wall_seconds")].parse::<f64>().unwrap() > 0.0));
    let avg = |r: &csv::StringRecord| r[col("avg_pcg_iters")].parse::<f64>().unwrap();
    for acc in ["1", "3", "5"] {
        let by_tol: Vec<f64> = ["1e-8", "1e-7", "1e-6"]
            .iter()
            .map(|t| {
                let r = rows
                    .iter()
                    .find(|r| &r[col("tol_pcg")] == *t && &r[col("n_cg_acc")] == acc)
                    .unwrap();
                avg(r)
            })
            .collect();
        assert!(by_tol.windows(2).all(|w| w[1] <= w[0]), "n_cg_acc {acc}: {by_tol:?}");
    }
    // deltas are measured against the first tightest cell
    assert_eq!(&rows[0][col("rel_delta_plate_line")], "0e0");
    assert_eq!(&rows[9][col("iter_ratio_vs_previous")], "1e0");
}

#[test]
fn exported_model_runs_like_the_builtin_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(tmp.path(), "slab.cfg", SLAB);
    let sys = tmp.path().join("sys");
    run_ok(&["export-model", "--config", s(&cfg), "--out", s(&sys)]);
    for f in ["M.mtx", "K.mtx", "source.txt", "mask.txt"] {
        assert!(sys.join(f).exists(), "{f}");
    }
    let imported = "problem.kind = matrix_market\nproblem.dir = sys\nproblem.source.amplitude = 1e6\n\
                    solver.t_end = 4e-3\nsolver.dt_factor = 0.5\n";
    let icfg = write_cfg(tmp.path(), "imported.cfg", imported);
    let (a, b) = (tmp.path().join("builtin"), tmp.path().join("imported"));
    run_ok(&["run", "--config", s(&cfg), "--out", s(&a)]);
    run_ok(&["run", "--config", s(&icfg), "--out", s(&b)]);
    for key in ["derived.steps", "derived.total_pcg_iterations"] {
        assert_eq!(metadata_value(&a, key), metadata_value(&b, key), "{key}");
    }
    let la: f64 = metadata_value(&a, "derived.lambda_max").parse().unwrap();
    let lb: f64 = metadata_value(&b, "derived.lambda_max").parse().unwrap();
    assert!((la - lb).abs() <= 1e-12 * la, "{la} vs {lb}");
    // imported systems carry no probes
    let traj = Trajectory::read_csv(b.join("trajectory.csv")).unwrap();
    assert!(traj.probe_names.is_empty());
}

#[test]
fn audit_passes_on_the_plate() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(tmp.path(), "p.cfg", PLATE);
    let out = tmp.path().join("o");
    run_ok(&["audit", "--config", s(&cfg), "--out", s(&out)]);
    let text = fs::read_to_string(out.join("audit.txt")).unwrap();
    assert!(text.ends_with("PASS (tol 1e-10)\n"), "{text}");
    assert_eq!(text.lines().filter(|l| l.contains(": cols ")).count(), 3);
}
