//! Multi-method, multi-seed benchmark.
//!
//! Every (dataset, method, seed) triple is solved from the seed's random
//! initialization. The reference optimum of a dataset is the best final
//! cost over all of its runs (cross-method consensus); a run converged if
//! its final cost is within `convergence_pct` percent of that reference
//! (plus a small absolute slack for zero-residual instances). The summary
//! reports per-method medians and improvement factors relative to `ours`;
//! cells of a method that failed on the majority of its runs hold the
//! sentinel `-`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::io::Dataset;
use crate::solver::{solve, Method, Problem, SolverConfig};
use crate::{Error, Result};

pub const SENTINEL: &str = "-";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub methods: Vec<Method>,
    pub seeds: usize,
    pub time_limit_s: f64,
    pub convergence_pct: f64,
    /// Absolute slack added to the convergence threshold, so zero-residual
    /// instances (reference cost ≈ 0) have a meaningful criterion.
    pub abs_tol: f64,
    pub parallel: bool,
    pub solver: SolverConfig,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            seeds: 5,
            time_limit_s: 600.0,
            convergence_pct: 1.0,
            abs_tol: 1e-8,
            parallel: false,
            solver: SolverConfig::default(),
        }
    }
}

impl BenchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument(
                "bench needs at least one method".into(),
            ));
        }
        if self.seeds == 0 {
            return Err(Error::InvalidArgument(
                "bench needs at least one seed".into(),
            ));
        }
        if !(self.time_limit_s > 0.0) || !(self.convergence_pct >= 0.0) || !(self.abs_tol >= 0.0) {
            return Err(Error::InvalidArgument(
                "time limit, convergence percentage and slack must be non-negative".into(),
            ));
        }
        self.solver.validate()
    }

    pub fn threshold(&self, best: f64) -> f64 {
        convergence_threshold(best, self.convergence_pct, self.abs_tol)
    }
}

pub fn convergence_threshold(best: f64, pct: f64, abs_tol: f64) -> f64 {
    (1.0 + pct / 100.0) * best + abs_tol
}

/// Outcome of one solve. Numeric fields are empty when the solve errored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub method: Method,
    pub seed: u64,
    /// `gradient`, `max_iters`, `timeout` or `error`.
    pub termination: String,
    pub final_cost: Option<f64>,
    pub iterations: Option<usize>,
    pub runtime_s: Option<f64>,
    pub error: Option<String>,
}

impl RunRecord {
    fn failed(dataset: &str, method: Method, seed: u64, err: String) -> Self {
        Self {
            dataset: dataset.to_string(),
            method,
            seed,
            termination: "error".into(),
            final_cost: None,
            iterations: None,
            runtime_s: None,
            error: Some(err),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub method: Method,
    pub runs: usize,
    pub converged: usize,
    pub best_cost: Option<f64>,
    pub median_runtime_s: Option<f64>,
    pub median_iterations: Option<f64>,
    /// Median runtime of this method divided by that of `ours`.
    pub runtime_factor: Option<f64>,
    /// Median iterations of this method divided by those of `ours`.
    pub iteration_factor: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchOutcome {
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

/// Median; the mean of the middle pair for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Best cost per dataset over all successful runs.
pub fn best_costs(runs: &[RunRecord]) -> BTreeMap<String, f64> {
    let mut best = BTreeMap::new();
    for r in runs {
        if let Some(c) = r.final_cost {
            let e = best.entry(r.dataset.clone()).or_insert(f64::INFINITY);
            if c < *e {
                *e = c;
            }
        }
    }
    best
}

pub fn is_converged(run: &RunRecord, best: f64, pct: f64, abs_tol: f64) -> bool {
    run.final_cost
        .is_some_and(|c| c <= convergence_threshold(best, pct, abs_tol))
}

/// Summary table as a pure function of the run records. Datasets appear in
/// order of first occurrence, methods in the order given.
pub fn aggregate(
    runs: &[RunRecord],
    methods: &[Method],
    pct: f64,
    abs_tol: f64,
) -> Vec<SummaryRow> {
    let best = best_costs(runs);
    let mut datasets: Vec<&str> = Vec::new();
    for r in runs {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
    }
    let mut rows = Vec::new();
    for ds in datasets {
        let best_cost = best.get(ds).copied();
        let mut ds_rows: Vec<SummaryRow> = methods
            .iter()
            .map(|&method| {
                let mine: Vec<&RunRecord> = runs
                    .iter()
                    .filter(|r| r.dataset == ds && r.method == method)
                    .collect();
                let converged = best_cost.map_or(0, |b| {
                    mine.iter()
                        .filter(|r| is_converged(r, b, pct, abs_tol))
                        .count()
                });
                let majority = converged * 2 > mine.len();
                let runtimes: Vec<f64> = mine.iter().filter_map(|r| r.runtime_s).collect();
                let iterations: Vec<f64> = mine
                    .iter()
                    .filter_map(|r| r.iterations.map(|i| i as f64))
                    .collect();
                SummaryRow {
                    dataset: ds.to_string(),
                    method,
                    runs: mine.len(),
                    converged,
                    best_cost,
                    median_runtime_s: if majority { median(&runtimes) } else { None },
                    median_iterations: if majority { median(&iterations) } else { None },
                    runtime_factor: None,
                    iteration_factor: None,
                }
            })
            .collect();
        let reference = ds_rows.iter().find(|r| r.method == Method::Ours).cloned();
        if let Some(ours) = reference {
            for row in &mut ds_rows {
                row.runtime_factor = ratio(row.median_runtime_s, ours.median_runtime_s);
                row.iteration_factor = ratio(row.median_iterations, ours.median_iterations);
            }
        }
        rows.extend(ds_rows);
    }
    rows
}

fn ratio(num: Option<f64>, den: Option<f64>) -> Option<f64> {
    match (num, den) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    }
}

fn run_one(
    dataset: &str,
    problem: &Problem<f64>,
    method: Method,
    seed: u64,
    config: &SolverConfig,
) -> RunRecord {
    let x0 = problem.initial_point(method, seed);
    let config = SolverConfig {
        seed,
        ..config.clone()
    };
    match solve(problem, method, &x0, &config) {
        Ok(report) => RunRecord {
            dataset: dataset.to_string(),
            method,
            seed,
            termination: report.termination.to_string(),
            final_cost: Some(report.final_cost),
            iterations: Some(report.iterations()),
            runtime_s: Some(report.elapsed_s()),
            error: None,
        },
        Err(e) => RunRecord::failed(dataset, method, seed, e.to_string()),
    }
}

/// Runs the benchmark. Failures of individual runs (including problem
/// construction) are recorded and do not stop the benchmark.
pub fn run_bench(datasets: &[Dataset<f64>], spec: &BenchSpec) -> Result<BenchOutcome> {
    spec.validate()?;
    if datasets.is_empty() {
        return Err(Error::InvalidArgument(
            "bench needs at least one dataset".into(),
        ));
    }
    let config = SolverConfig {
        max_time: spec.time_limit_s,
        ..spec.solver.clone()
    };
    let mut runs = Vec::new();
    for ds in datasets {
        log::info!("bench: dataset {} ({} rows)", ds.name, ds.layout.n());
        let problems = build_problems(ds, spec);
        let tasks: Vec<(u64, Method)> = (0..spec.seeds as u64)
            .flat_map(|seed| spec.methods.iter().map(move |&m| (seed, m)))
            .collect();
        let run_task = |&(seed, method): &(u64, Method)| -> RunRecord {
            match &problems[&method.needs_elimination()] {
                Ok(problem) => run_one(&ds.name, problem, method, seed, &config),
                Err(msg) => RunRecord::failed(&ds.name, method, seed, msg.clone()),
            }
        };
        let results = if spec.parallel {
            run_parallel(&tasks, run_task)
        } else {
            tasks.iter().map(run_task).collect()
        };
        for r in &results {
            log::info!(
                "bench: {} {} seed {} -> {} cost {:?}",
                r.dataset,
                r.method,
                r.seed,
                r.termination,
                r.final_cost
            );
        }
        runs.extend(results);
    }
    let summary = aggregate(&runs, &spec.methods, spec.convergence_pct, spec.abs_tol);
    Ok(BenchOutcome { runs, summary })
}

/// Problems keyed by "needs elimination"; construction errors are kept as
/// messages so the affected runs can be reported individually.
fn build_problems(
    ds: &Dataset<f64>,
    spec: &BenchSpec,
) -> BTreeMap<bool, std::result::Result<Problem<f64>, String>> {
    let cap = spec.solver.precond_cond_cap;
    let mut out = BTreeMap::new();
    let model = match ds.assemble() {
        Ok(m) => m,
        Err(e) => {
            out.insert(true, Err(e.to_string()));
            out.insert(false, Err(e.to_string()));
            return out;
        }
    };
    let needs = spec.methods.iter().any(|m| m.needs_elimination());
    let plain = spec.methods.iter().any(|m| !m.needs_elimination());
    if needs {
        match Problem::new(model.clone(), cap) {
            Ok(p) => {
                out.insert(false, Ok(p.clone()));
                out.insert(true, Ok(p));
                return out;
            }
            Err(e) => {
                out.insert(true, Err(e.to_string()));
            }
        }
    }
    if plain {
        out.insert(
            false,
            Problem::without_elimination(model, cap).map_err(|e| e.to_string()),
        );
    }
    out
}

fn run_parallel<F>(tasks: &[(u64, Method)], run: F) -> Vec<RunRecord>
where
    F: Fn(&(u64, Method)) -> RunRecord + Sync,
{
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<RunRecord>>> = Mutex::new(vec![None; tasks.len()]);
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(tasks.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= tasks.len() {
                    break;
                }
                let r = run(&tasks[k]);
                results.lock().unwrap()[k] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.unwrap())
        .collect()
}

fn opt_to_string<V: ToString>(v: Option<V>) -> String {
    v.map_or_else(|| SENTINEL.to_string(), |x| x.to_string())
}

fn parse_opt<V: std::str::FromStr>(s: &str, line: usize) -> Result<Option<V>> {
    if s == SENTINEL || s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| Error::Parse {
        line,
        message: format!("invalid field '{s}'"),
    })
}

pub const RUNS_HEADER: [&str; 8] = [
    "dataset",
    "method",
    "seed",
    "termination",
    "final_cost",
    "iterations",
    "runtime_s",
    "error",
];

pub const SUMMARY_HEADER: [&str; 9] = [
    "dataset",
    "method",
    "runs",
    "converged",
    "best_cost",
    "median_runtime_s",
    "median_iterations",
    "runtime_factor",
    "iteration_factor",
];

pub fn write_runs_csv<W: Write>(runs: &[RunRecord], w: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    writer.write_record(RUNS_HEADER)?;
    for r in runs {
        writer.write_record([
            r.dataset.clone(),
            r.method.to_string(),
            r.seed.to_string(),
            r.termination.clone(),
            opt_to_string(r.final_cost),
            opt_to_string(r.iterations),
            opt_to_string(r.runtime_s),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_runs_csv<R: Read>(r: R) -> Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_reader(r);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != RUNS_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected runs header {header:?}"),
        });
    }
    let mut runs = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        if rec.len() != RUNS_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", RUNS_HEADER.len(), rec.len()),
            });
        }
        let seed = rec[2].parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid seed '{}'", &rec[2]),
        })?;
        runs.push(RunRecord {
            dataset: rec[0].to_string(),
            method: rec[1].parse()?,
            seed,
            termination: rec[3].to_string(),
            final_cost: parse_opt(&rec[4], line)?,
            iterations: parse_opt(&rec[5], line)?,
            runtime_s: parse_opt(&rec[6], line)?,
            error: (!rec[7].is_empty()).then(|| rec[7].to_string()),
        });
    }
    Ok(runs)
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    writer.write_record(SUMMARY_HEADER)?;
    for r in rows {
        writer.write_record([
            r.dataset.clone(),
            r.method.to_string(),
            r.runs.to_string(),
            r.converged.to_string(),
            opt_to_string(r.best_cost),
            opt_to_string(r.median_runtime_s),
            opt_to_string(r.median_iterations),
            opt_to_string(r.runtime_factor),
            opt_to_string(r.iteration_factor),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn summary_csv_string(rows: &[SummaryRow]) -> Result<String> {
    let mut out = Vec::new();
    write_summary_csv(rows, &mut out)?;
    Ok(String::from_utf8(out).expect("csv output is UTF-8"))
}
