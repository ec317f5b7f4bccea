use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{check_config, DatasetLayout, ExperimentConfig, Method, DATA_FORMAT_VERSION};
use crate::baselines::{gsbf, rminlp, HeuristicResult};
use crate::bnb::{solve_exact, solve_with_policy, ExactOutcome};
use crate::error::{Error, Result};
use crate::netgen::{load_instance, NetworkInstance};
use crate::par;
use crate::policy::PolicyModel;

pub const RESULT_COLUMNS: [&str; 9] = [
    "instance_seed",
    "tsinr_db",
    "method",
    "objective_w",
    "socp_solves",
    "wall_time_s",
    "status",
    "gap",
    "speedup",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Optimal,
    Feasible,
    NotFound,
    Infeasible,
    Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub instance_seed: u64,
    pub tsinr_db: f64,
    pub method: Method,
    pub objective_w: Option<f64>,
    pub socp_solves: u64,
    pub wall_time_s: f64,
    pub status: RowStatus,
    pub gap: Option<f64>,
    pub speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    /// `None` for the aggregate over all TSINR values.
    pub tsinr_db: Option<f64>,
    pub method: Method,
    pub count: usize,
    pub not_found: usize,
    pub mean_power_w: Option<f64>,
    pub mean_socp_solves: f64,
    pub mean_gap: Option<f64>,
    pub mean_speedup: Option<f64>,
    /// Ratio of mean exact to mean method socp solves.
    pub socp_reduction: Option<f64>,
    pub mean_wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub version: String,
    pub crate_version: String,
    pub config_hash: String,
    pub exact_reference: bool,
    pub per_tsinr: Vec<MethodSummary>,
    pub overall: Vec<MethodSummary>,
}

fn heuristic_row(seed: u64, tsinr_db: f64, method: Method, res: HeuristicResult, secs: f64) -> ResultRow {
    let found = res.is_feasible();
    ResultRow {
        instance_seed: seed,
        tsinr_db,
        method,
        objective_w: found.then_some(res.objective),
        socp_solves: res.socp_solves,
        wall_time_s: secs,
        status: if found { RowStatus::Feasible } else { RowStatus::Infeasible },
        gap: None,
        speedup: None,
    }
}

fn run_methods(
    config: &ExperimentConfig,
    instance: &NetworkInstance,
    tsinr_db: f64,
    policy: Option<&PolicyModel>,
    no_exact: bool,
) -> Result<Vec<ResultRow>> {
    let seed = instance.seed;
    let mut methods = config.methods.clone();
    methods.sort();
    methods.dedup();
    let mut rows = Vec::new();
    let mut reference: Option<(f64, u64)> = None;
    for method in methods {
        let start = Instant::now();
        let row = match method {
            Method::Exact if no_exact => continue,
            Method::Exact => {
                let (objective, solves, status) = match solve_exact(instance, &config.limits) {
                    Ok(ExactOutcome::Solved { incumbent, stats, .. }) => {
                        reference = Some((incumbent.objective, stats.socp_solves));
                        (Some(incumbent.objective), stats.socp_solves, RowStatus::Optimal)
                    }
                    Ok(ExactOutcome::Infeasible { stats }) => (None, stats.socp_solves, RowStatus::Infeasible),
                    Err(Error::Budget { stats }) => (None, stats.socp_solves, RowStatus::Budget),
                    Err(e) => return Err(e),
                };
                ResultRow {
                    instance_seed: seed,
                    tsinr_db,
                    method,
                    objective_w: objective,
                    socp_solves: solves,
                    wall_time_s: start.elapsed().as_secs_f64(),
                    status,
                    gap: None,
                    speedup: None,
                }
            }
            Method::Learned => {
                let policy = policy.ok_or_else(|| Error::Config("method `learned` needs a policy file".into()))?;
                let (objective, solves, status) = match solve_with_policy(instance, policy, &config.limits) {
                    Ok(out) => match out.incumbent {
                        Some(inc) => (Some(inc.objective), out.stats.socp_solves, RowStatus::Feasible),
                        None => (None, out.stats.socp_solves, RowStatus::NotFound),
                    },
                    Err(Error::Budget { stats }) => (None, stats.socp_solves, RowStatus::Budget),
                    Err(e) => return Err(e),
                };
                ResultRow {
                    instance_seed: seed,
                    tsinr_db,
                    method,
                    objective_w: objective,
                    socp_solves: solves,
                    wall_time_s: start.elapsed().as_secs_f64(),
                    status,
                    gap: None,
                    speedup: None,
                }
            }
            Method::Rminlp => {
                let res = rminlp(instance, &config.rminlp, &config.limits.solver)?;
                heuristic_row(seed, tsinr_db, method, res, start.elapsed().as_secs_f64())
            }
            Method::Gsbf => {
                let res = gsbf(instance, &config.gsbf, &config.limits.solver)?;
                heuristic_row(seed, tsinr_db, method, res, start.elapsed().as_secs_f64())
            }
        };
        rows.push(row);
    }
    if let Some((exact_obj, exact_solves)) = reference {
        for row in &mut rows {
            row.speedup = Some(exact_solves as f64 / row.socp_solves.max(1) as f64);
            row.gap = row.objective_w.map(|o| (o - exact_obj) / exact_obj);
        }
    }
    Ok(rows)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn summarize_group(tsinr_db: Option<f64>, method: Method, rows: &[&ResultRow]) -> MethodSummary {
    let found: Vec<f64> = rows.iter().filter_map(|r| r.objective_w).collect();
    let mean_socp_solves = mean(rows.iter().map(|r| r.socp_solves as f64)).unwrap_or(0.0);
    let exact_mean = mean(
        rows.iter()
            .filter_map(|r| r.speedup.map(|s| s * r.socp_solves.max(1) as f64)),
    );
    MethodSummary {
        tsinr_db,
        method,
        count: rows.len(),
        not_found: rows.len() - found.len(),
        mean_power_w: mean(found.iter().copied()),
        mean_socp_solves,
        mean_gap: mean(rows.iter().filter_map(|r| r.gap)),
        mean_speedup: mean(rows.iter().filter_map(|r| r.speedup)),
        socp_reduction: exact_mean.map(|e| e / mean_socp_solves.max(1.0)),
        mean_wall_time_s: mean(rows.iter().map(|r| r.wall_time_s)).unwrap_or(0.0),
    }
}

pub fn summarize_rows(rows: &[ResultRow], config_hash: &str, exact_reference: bool) -> EvalSummary {
    let mut by_key: BTreeMap<(i64, Method), Vec<&ResultRow>> = BTreeMap::new();
    let mut by_method: BTreeMap<Method, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        by_key.entry((tsinr_key(r.tsinr_db), r.method)).or_default().push(r);
        by_method.entry(r.method).or_default().push(r);
    }
    EvalSummary {
        version: DATA_FORMAT_VERSION.to_string(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash.to_string(),
        exact_reference,
        per_tsinr: by_key
            .values()
            .map(|g| summarize_group(Some(g[0].tsinr_db), g[0].method, g))
            .collect(),
        overall: by_method.iter().map(|(&m, g)| summarize_group(None, m, g)).collect(),
    }
}

fn tsinr_key(db: f64) -> i64 {
    (db * 1e6).round() as i64
}

pub fn write_results(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(0, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(0, e))?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(row: usize, e: csv::Error) -> Error {
    Error::Csv {
        row,
        reason: e.to_string(),
    }
}

/// Parses a results file; `row` in errors counts data rows from 1.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(0, e))?;
    let header = r.headers().map_err(|e| csv_err(0, e))?.clone();
    if header.iter().ne(RESULT_COLUMNS) {
        return Err(Error::Csv {
            row: 0,
            reason: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| csv_err(i + 1, e)))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    /// Skip the exact reference; gaps and speedups are left empty.
    pub no_exact: bool,
    pub budget_nodes: Option<u64>,
}

/// Runs every configured method on each test realization at each TSINR.
pub fn cmd_eval(
    layout: &DatasetLayout,
    config: &ExperimentConfig,
    policy: Option<&PolicyModel>,
    opts: &EvalOptions,
) -> Result<(Vec<ResultRow>, EvalSummary)> {
    let manifest = layout.load_manifest()?;
    check_config(&manifest, config)?;
    let no_exact = opts.no_exact;
    let mut config = config.clone();
    if let Some(n) = opts.budget_nodes {
        config.limits.max_nodes = Some(n);
    }
    let config = &config;
    if config.methods.contains(&Method::Learned) && policy.is_none() {
        return Err(Error::Config("method `learned` requested but no policy file given".into()));
    }
    let instances: Vec<NetworkInstance> = manifest
        .test
        .iter()
        .map(|e| load_instance(&layout.instance(e)))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, f64)> = (0..instances.len())
        .flat_map(|i| config.tsinr_sweep_db.iter().map(move |&db| (i, db)))
        .collect();
    let per_job = par::map(config.execution, &jobs, |&(i, db)| {
        run_methods(config, &instances[i].with_tsinr_db(db), db, policy, no_exact)
    });
    let mut rows = Vec::new();
    for r in per_job {
        rows.extend(r?);
    }
    rows.sort_by(|x, y| {
        x.instance_seed
            .cmp(&y.instance_seed)
            .then(x.tsinr_db.total_cmp(&y.tsinr_db))
            .then(x.method.cmp(&y.method))
    });
    write_results(&rows, &layout.results())?;
    let summary = summarize_rows(&rows, &manifest.config_hash, !no_exact);
    std::fs::write(layout.summary(), serde_json::to_string_pretty(&summary)?)?;
    Ok((rows, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub tsinr_db: f64,
    pub method: Method,
    pub count: usize,
    pub found: usize,
    pub mean_objective_w: Option<f64>,
    pub std_objective_w: Option<f64>,
    pub mean_socp_solves: f64,
    pub std_socp_solves: f64,
    pub mean_gap: Option<f64>,
    pub mean_speedup: Option<f64>,
}

fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    let m = mean(values.iter().copied())?;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
    Some((m, var.sqrt()))
}

/// Per-(TSINR, method) mean / std / count table written as CSV.
pub fn cmd_report(results: &Path, out: &Path) -> Result<Vec<ReportRow>> {
    let rows = read_results(results)?;
    let mut groups: BTreeMap<(i64, Method), Vec<&ResultRow>> = BTreeMap::new();
    for r in &rows {
        groups.entry((tsinr_key(r.tsinr_db), r.method)).or_default().push(r);
    }
    let table: Vec<ReportRow> = groups
        .values()
        .map(|g| {
            let objectives: Vec<f64> = g.iter().filter_map(|r| r.objective_w).collect();
            let solves: Vec<f64> = g.iter().map(|r| r.socp_solves as f64).collect();
            let obj = mean_std(&objectives);
            let (ms, ss) = mean_std(&solves).expect("groups are nonempty");
            ReportRow {
                tsinr_db: g[0].tsinr_db,
                method: g[0].method,
                count: g.len(),
                found: objectives.len(),
                mean_objective_w: obj.map(|o| o.0),
                std_objective_w: obj.map(|o| o.1),
                mean_socp_solves: ms,
                std_socp_solves: ss,
                mean_gap: mean(g.iter().filter_map(|r| r.gap)),
                mean_speedup: mean(g.iter().filter_map(|r| r.speedup)),
            }
        })
        .collect();
    let mut w = csv::Writer::from_path(out).map_err(|e| csv_err(0, e))?;
    for row in &table {
        w.serialize(row).map_err(|e| csv_err(0, e))?;
    }
    w.flush()?;
    Ok(table)
}
