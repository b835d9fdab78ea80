//! File-format round trips and error reporting.

use schur_elim::io::report::{read_trace_csv, write_trace_csv};
use schur_elim::io::{
    g2o_string, generate_grid_pgo, parse_g2o_str, read_g2o, read_report_json, write_g2o_file,
    write_report, GridSpec, Noise, ReportFormat,
};
use schur_elim::solver::{solve, Method, Problem, SolverConfig};
use schur_elim::{Dataset, Error, Measurement, SolverReport};

const SE3: &str = "\
VERTEX_SE3:QUAT 0 0 0 0 0 0 0 1
VERTEX_SE3:QUAT 1 1 0 0 0 0 0.3826834 0.9238795
VERTEX_TRACKXYZ 2 0.5 1 0
EDGE_SE3:QUAT 0 1 1 0 0 0 0 0.3826834 0.9238795 4 0 0 0 0 0 4 0 0 0 0 4 0 0 0 9 0 0 9 0 9
EDGE_SE3_TRACKXYZ 0 2 0 0.5 1 0 2 0 0 2 0 2
EDGE_RANGE 1 2 1.1 3
";

#[test]
fn se3_parse_and_round_trip() {
    let ds: Dataset = parse_g2o_str(SE3, "se3").unwrap();
    assert_eq!(ds.d(), 3);
    assert_eq!(ds.measurements.len(), 4);
    match &ds.measurements[0] {
        Measurement::RelRotation {
            kappa, rotation, ..
        } => {
            assert!((kappa - 9.0).abs() < 1e-12);
            assert!((rotation[(0, 0)] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        }
        other => panic!("expected rotation, got {other:?}"),
    }
    let text = g2o_string(&ds).unwrap();
    let again: Dataset = parse_g2o_str(&text, "se3").unwrap();
    let dist =
        schur_elim::io::g2o::measurement_distance(&ds.measurements, &again.measurements).unwrap();
    assert!(dist < 1e-12);
    assert_eq!(ds.layout, again.layout);
}

#[test]
fn parse_errors_carry_line_numbers() {
    let cases = [
        ("VERTEX_SE2 0 0 0\n", 1),
        (
            "VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 0 0 0\nEDGE_SE2 0 1 1 0 0 1 0 0 1 0\n",
            3,
        ),
        ("# header\nVERTEX_SE3:QUAT 0 0 0 0 0 0 0 2\n", 2),
        ("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 0 0 x\n", 2),
    ];
    for (text, line) in cases {
        match parse_g2o_str::<f64>(text, "bad") {
            Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
            other => panic!("expected parse error for {text:?}, got {other:?}"),
        }
    }
}

#[test]
fn unknown_records_are_skipped() {
    let text = "VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1 0 0\nFIX 0\nEDGE_SE2 0 1 1 0 0 1 0 0 1 0 1\n";
    let ds: Dataset = parse_g2o_str(text, "fix").unwrap();
    assert_eq!(ds.measurements.len(), 2);
}

#[test]
fn files_and_reports_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let noise = Noise {
        rot_sigma: 0.05,
        trans_sigma: 0.1,
    };
    let ds: Dataset = generate_grid_pgo(&GridSpec::planar(3, 3, noise, 0.5, 2)).unwrap();
    let path = dir.path().join("grid.g2o");
    write_g2o_file(&ds, &path).unwrap();
    let back: Dataset = read_g2o(&path).unwrap();
    assert_eq!(back.name, "grid");
    assert!(
        schur_elim::io::g2o::measurement_distance(&ds.measurements, &back.measurements).unwrap()
            < 1e-12
    );

    let problem = Problem::new(back.assemble().unwrap(), 1e6).unwrap();
    let report = solve(
        &problem,
        Method::Ours,
        &problem.initial_point(Method::Ours, 0),
        &SolverConfig::default(),
    )
    .unwrap();

    let json = dir.path().join("r.json");
    write_report(&report, ReportFormat::from_path(&json), &json).unwrap();
    let loaded: SolverReport = read_report_json(&json).unwrap();
    assert_eq!(loaded, report);

    let mut csv = Vec::new();
    write_trace_csv(&report.records, &mut csv).unwrap();
    let records = read_trace_csv(csv.as_slice()).unwrap();
    assert_eq!(records, report.records);
}
