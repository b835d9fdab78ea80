use std::path::Path;
use std::process::{Command, Output};

use schur_elim::io::read_g2o;
use schur_elim::Dataset;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_schur-elim"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn final_cost(out: &Output) -> f64 {
    stdout(out)
        .lines()
        .find_map(|l| l.strip_prefix("final cost: "))
        .expect("final cost line")
        .trim()
        .parse()
        .unwrap()
}

fn generate_grid(dir: &Path, name: &str, extra: &[&str]) -> std::path::PathBuf {
    let path = dir.join(name);
    let mut args = vec![
        "generate",
        "grid",
        "--rows",
        "3",
        "--cols",
        "4",
        "--out",
        p(&path),
    ];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn noiseless_grid_solves_to_zero_for_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let grid = generate_grid(dir.path(), "grid.g2o", &["--seed", "4"]);
    for method in ["ours", "original", "original-varpro"] {
        let trace = dir.path().join(format!("{method}.csv"));
        let out = run(&[
            "solve",
            "--input",
            p(&grid),
            "--method",
            method,
            "--seed",
            "1",
            "--out",
            p(&trace),
        ]);
        assert_eq!(code(&out), 0, "{method}: {}", stdout(&out));
        assert!(final_cost(&out) <= 1e-8, "{method}: {}", stdout(&out));
        assert!(stdout(&out).contains("termination: gradient"));
        let csv = std::fs::read_to_string(&trace).unwrap();
        assert!(csv.starts_with("iter,cost,grad_norm,tr_radius,inner_iters,accepted,elapsed_s\n"));
        assert!(csv.lines().count() > 1);
    }
}

#[test]
fn json_report_and_f32_precision() {
    let dir = tempfile::tempdir().unwrap();
    let grid = generate_grid(
        dir.path(),
        "grid.g2o",
        &["--rot-sigma", "0.05", "--trans-sigma", "0.1"],
    );
    let json = dir.path().join("report.json");
    let out = run(&[
        "solve",
        "--input",
        p(&grid),
        "--method",
        "ours",
        "--out",
        p(&json),
    ]);
    assert_eq!(code(&out), 0);
    let report = schur_elim::io::read_report_json::<f64>(&json).unwrap();
    assert_eq!(report.method, schur_elim::solver::Method::Ours);
    assert!((report.final_cost - final_cost(&out)).abs() <= 1e-9 * report.final_cost.max(1.0));

    let out = run(&[
        "solve",
        "--input",
        p(&grid),
        "--method",
        "original",
        "--precision",
        "f32",
    ]);
    assert!(matches!(code(&out), 0 | 2), "{}", stdout(&out));
    assert!(final_cost(&out).is_finite());
}

#[test]
fn budget_exhaustion_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let grid = generate_grid(
        dir.path(),
        "grid.g2o",
        &["--rot-sigma", "0.1", "--trans-sigma", "0.1"],
    );
    let out = run(&[
        "solve",
        "--input",
        p(&grid),
        "--method",
        "original",
        "--max-iters",
        "1",
    ]);
    assert_eq!(code(&out), 2, "{}", stdout(&out));
    assert!(stdout(&out).contains("termination: max_iters"));
}

#[test]
fn bad_flags_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    let grid = generate_grid(dir.path(), "grid.g2o", &[]);
    assert_eq!(
        code(&run(&["solve", "--input", p(&grid), "--method", "newton"])),
        64
    );
    assert_eq!(code(&run(&["solve", "--input", p(&grid)])), 64);
    assert_eq!(code(&run(&["frobnicate"])), 64);
    assert_eq!(
        code(&run(&[
            "solve",
            "--input",
            p(&grid),
            "--method",
            "ours",
            "--grad-tol",
            "-1"
        ])),
        64
    );
    assert_eq!(code(&run(&["verify", "--trials", "0"])), 64);
    assert_eq!(
        code(&run(&["bench", "--input", p(&grid), "--seeds", "0"])),
        64
    );
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn malformed_input_exits_65() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.g2o");
    std::fs::write(&bad, "VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1 0\n").unwrap();
    let out = run(&["solve", "--input", p(&bad), "--method", "ours"]);
    assert_eq!(code(&out), 65);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let self_loop = dir.path().join("loop.g2o");
    std::fs::write(
        &self_loop,
        "VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1 0 0\nEDGE_SE2 0 1 1 0 0 1 0 0 1 0 1\nEDGE_SE2 1 1 0 0 0 1 0 0 1 0 1\n",
    )
    .unwrap();
    assert_eq!(
        code(&run(&[
            "solve",
            "--input",
            p(&self_loop),
            "--method",
            "original"
        ])),
        65
    );
    assert_eq!(
        code(&run(&[
            "convert-snl",
            "--input",
            p(&self_loop),
            "--out",
            p(&dir.path().join("x.g2o"))
        ])),
        65
    );

    let missing = dir.path().join("missing.g2o");
    assert_eq!(
        code(&run(&["solve", "--input", p(&missing), "--method", "ours"])),
        1
    );
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "--rot-sigma",
        "0.05",
        "--trans-sigma",
        "0.1",
        "--seed",
        "9",
        "--loop-prob",
        "0.5",
    ];
    let a = generate_grid(dir.path(), "a.g2o", &args);
    let b = generate_grid(dir.path(), "b.g2o", &args);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let sfm = |name: &str| {
        let path = dir.path().join(name);
        let out = run(&[
            "generate",
            "sfm",
            "--frames",
            "6",
            "--points",
            "20",
            "--obs-per-point",
            "3",
            "--seed",
            "2",
            "--trans-sigma",
            "0.1",
            "--out",
            p(&path),
        ]);
        assert_eq!(code(&out), 0);
        std::fs::read(path).unwrap()
    };
    assert_eq!(sfm("s1.g2o"), sfm("s2.g2o"));
}

#[test]
fn convert_snl_produces_range_only_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let grid = generate_grid(
        dir.path(),
        "grid.g2o",
        &["--trans-sigma", "0.05", "--loop-prob", "1"],
    );
    let snl = dir.path().join("snl.g2o");
    assert_eq!(
        code(&run(&[
            "convert-snl",
            "--input",
            p(&grid),
            "--out",
            p(&snl)
        ])),
        0
    );
    let text = std::fs::read_to_string(&snl).unwrap();
    for line in text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
    {
        let tag = line.split_whitespace().next().unwrap();
        assert!(
            tag == "VERTEX_XY" || tag == "EDGE_RANGE",
            "unexpected record {line}"
        );
    }
    let source: Dataset = read_g2o(&grid).unwrap();
    let converted: Dataset = read_g2o(&snl).unwrap();
    let translations = source
        .measurements
        .iter()
        .filter(|m| matches!(m, schur_elim::Measurement::RelTranslation { .. }))
        .count();
    assert_eq!(converted.measurements.len(), translations);

    let out = run(&[
        "solve",
        "--input",
        p(&snl),
        "--method",
        "ours",
        "--max-iters",
        "300",
    ]);
    assert!(matches!(code(&out), 0 | 2));
    assert!(final_cost(&out).is_finite());
}

#[test]
fn bench_writes_runs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let grid = generate_grid(
        dir.path(),
        "grid.g2o",
        &["--rot-sigma", "0.05", "--trans-sigma", "0.1"],
    );
    let runs = dir.path().join("runs.csv");
    let summary = dir.path().join("summary.csv");
    let out = run(&[
        "bench",
        "--input",
        p(&grid),
        "--seeds",
        "2",
        "--time-limit",
        "30",
        "--runs-out",
        p(&runs),
        "--summary-out",
        p(&summary),
        "--parallel",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let runs_text = std::fs::read_to_string(&runs).unwrap();
    assert_eq!(runs_text.lines().count(), 1 + 2 * 3);
    let summary_text = std::fs::read_to_string(&summary).unwrap();
    let lines: Vec<&str> = summary_text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("grid,ours,2,"));
    let ours: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(ours[7], "1");
    assert_eq!(ours[8], "1");

    let again = dir.path().join("again.csv");
    let out = run(&["bench", "--from-runs", p(&runs), "--summary-out", p(&again)]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read_to_string(&again).unwrap(), summary_text);
}

#[test]
fn verify_exit_codes() {
    let out = run(&["verify", "--trials", "3", "--seed", "5"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("operator-vs-dense"));

    let out = run(&["verify", "--trials", "2", "--inject-nonincidence"]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("NonIncidence"), "{err}");
    assert!(err.contains("seed"), "{err}");
}
