mod common;

use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config as RunnerConfig, TestRunner};

use common::props::*;
use common::{correctness_set, enumerate_optimum, labeled, rel_diff};
use cranbnb::bench::{
    cmd_eval, cmd_gen, cmd_label, cmd_train, DatasetLayout, EvalOptions, EvalSummary, ExperimentConfig, Method,
    MethodSummary, ResultRow,
};
use cranbnb::bnb::{optimal_node_set, run_search, solve_exact, ExactOutcome, NodeOutcome, NodeSolver, PolicyController, SearchLimits};
use cranbnb::conic::{build_relaxation, farkas_residual};
use cranbnb::dagger::evaluate_policy;
use cranbnb::netgen::GenConfig;
use cranbnb::par::Execution;
use cranbnb::policy::{OraclePolicy, PolicyModel};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn criteria_1_to_3() -> [Verdict; 3] {
    let limits = SearchLimits::default();
    let mut worst = 0.0f64;
    let mut mismatches = 0;
    let mut bound_bad = 0;
    let mut infeasible_bad = 0;
    let mut pruned = (0, 0);
    let mut oracle_ok = 0;
    let mut feasible = 0;
    let mut oracle_counts = Vec::new();
    let start = Instant::now();
    for inst in correctness_set() {
        let brute = enumerate_optimum(&inst);
        let outcome = solve_exact(&inst, &limits).unwrap();
        let (inc, trace) = match (&outcome, &brute) {
            (ExactOutcome::Solved { incumbent, trace, .. }, Some((_, best))) => {
                worst = worst.max(rel_diff(incumbent.objective, *best));
                (incumbent, trace)
            }
            (ExactOutcome::Infeasible { .. }, None) => continue,
            _ => {
                mismatches += 1;
                continue;
            }
        };
        let slack = 1e-6 * (1.0 + inc.objective.abs());
        for rec in &trace.nodes {
            match rec.outcome {
                NodeOutcome::PrunedBound => {
                    pruned.0 += 1;
                    bound_bad += usize::from(rec.relaxation_objective.is_none_or(|o| o < inc.objective - slack));
                }
                NodeOutcome::PrunedInfeasible => {
                    pruned.1 += 1;
                    let program = build_relaxation(&inst, &rec.assignment()).unwrap();
                    let ok = rec.certificate.as_ref().is_some_and(|y| farkas_residual(&program, y) < 1e-6);
                    infeasible_bad += usize::from(!ok);
                }
                _ => {}
            }
        }
        feasible += 1;
        let oracle = OraclePolicy(optimal_node_set(trace));
        let mut solver = NodeSolver::new(&inst, limits.solver);
        let out = run_search(&mut solver, &limits, &mut PolicyController { policy: &oracle }).unwrap();
        let want = 2 * inst.num_rrh as u64 + 1;
        oracle_ok += usize::from(out.stats.socp_solves == want);
        oracle_counts.push(format!("L{}:{}/{}", inst.num_rrh, out.stats.socp_solves, want));
    }
    let secs = start.elapsed().as_secs_f64();
    [
        verdict(
            mismatches == 0 && worst <= 1e-4 && secs < 300.0,
            format!("20 instances ({feasible} feasible), max rel diff {worst:.2e}, {mismatches} status mismatches, {secs:.1}s"),
        ),
        verdict(
            bound_bad == 0 && infeasible_bad == 0,
            format!(
                "{} bound-pruned nodes ({bound_bad} violations), {} infeasible-pruned nodes ({infeasible_bad} without valid certificate)",
                pruned.0, pruned.1
            ),
        ),
        verdict(
            oracle_ok == feasible,
            format!(
                "{oracle_ok}/{feasible} instances with socp_solves = 2L+1; observed {}",
                oracle_counts.join(" ")
            ),
        ),
    ]
}

fn find<'a>(summary: &'a [MethodSummary], method: Method, tsinr: Option<f64>) -> &'a MethodSummary {
    summary
        .iter()
        .find(|s| s.method == method && s.tsinr_db == tsinr)
        .expect("summary entry")
}

struct Pipeline {
    model: PolicyModel,
    rows: Vec<ResultRow>,
    summary: EvalSummary,
    secs: f64,
}

fn pipeline(cfg: &ExperimentConfig) -> Pipeline {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let layout = DatasetLayout::new(dir.path());
    cmd_gen(cfg, dir.path()).unwrap();
    cmd_label(&layout, &cfg.limits, cfg.execution).unwrap();
    let (model, _) = cmd_train(&layout, &cfg.train_run_config()).unwrap();
    let (rows, summary) = cmd_eval(&layout, cfg, Some(&model), &EvalOptions::default()).unwrap();
    Pipeline {
        model,
        rows,
        summary,
        secs: start.elapsed().as_secs_f64(),
    }
}

fn desk_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.training.retrain_every = 10;
    cfg
}

fn criterion_4(run: &Pipeline) -> Verdict {
    let cell = find(&run.summary.per_tsinr, Method::Learned, Some(0.0));
    let gap = cell.mean_gap.unwrap_or(f64::INFINITY);
    let reduction = cell.socp_reduction.unwrap_or(0.0);
    let others: Vec<String> = run
        .summary
        .per_tsinr
        .iter()
        .filter(|s| s.method == Method::Learned)
        .map(|s| {
            format!(
                "{}dB {:.2}x/{:.2}%",
                s.tsinr_db.unwrap_or(f64::NAN),
                s.socp_reduction.unwrap_or(0.0),
                100.0 * s.mean_gap.unwrap_or(f64::NAN)
            )
        })
        .collect();
    verdict(
        gap <= 0.02 && reduction >= 2.0,
        format!(
            "TSINR 0 dB over {} test instances: gap {:.2}%, reduction {:.2}x, NotFound {}; all cells: {}; pipeline {:.0}s",
            cell.count,
            100.0 * gap,
            reduction,
            cell.not_found,
            others.join(", "),
            run.secs
        ),
    )
}

fn criterion_5() -> Verdict {
    let mut cfg = desk_config();
    cfg.scenario = GenConfig {
        num_rrh: 4,
        num_users: 3,
        ..GenConfig::default()
    };
    cfg.test_scenario = Some(GenConfig {
        num_rrh: 6,
        num_users: 4,
        ..GenConfig::default()
    });
    let run = pipeline(&cfg);
    let learned = find(&run.summary.overall, Method::Learned, None);
    let gap = learned.mean_gap.unwrap_or(f64::INFINITY);
    verdict(
        gap <= 0.05,
        format!(
            "trained at L=4/K=3 (dim {}), tested at L=6/K=4 over {} runs: gap {:.2}%, NotFound {}, reduction {:.2}x",
            run.model.dim(),
            learned.count,
            100.0 * gap,
            learned.not_found,
            learned.socp_reduction.unwrap_or(0.0)
        ),
    )
}

fn criterion_6(run: &Pipeline) -> Verdict {
    let mut violations = 0;
    let mut sums = [0.0f64; 3];
    let mut complete = 0;
    for group in run.rows.chunks(4) {
        let obj = |m: Method| group.iter().find(|r| r.method == m).and_then(|r| r.objective_w);
        let Some(exact) = obj(Method::Exact) else { continue };
        let slack = 1e-6 * exact;
        let others = [obj(Method::Learned), obj(Method::Gsbf), obj(Method::Rminlp)];
        violations += others.iter().flatten().filter(|&&o| o < exact - slack).count();
        if let [Some(l), Some(g), Some(r)] = others {
            complete += 1;
            sums[0] += l;
            sums[1] += g;
            sums[2] += r;
        }
    }
    let [learned, gsbf, rminlp] = sums.map(|s| s / complete.max(1) as f64);
    let heuristic = gsbf.min(rminlp);
    verdict(
        violations == 0 && complete > 0 && learned <= heuristic * 1.01,
        format!(
            "{violations} ordering violations; mean power over {complete} runs: learned {learned:.3} W, GSBF {gsbf:.3} W, RMINLP {rminlp:.3} W"
        ),
    )
}

fn criterion_7(model: &PolicyModel) -> Verdict {
    let limits = SearchLimits::default();
    let mut points = Vec::new();
    let mut errors = (0.0, 0.0);
    for (i, l) in [4usize, 5, 6, 7].into_iter().enumerate() {
        let set = labeled(l, 4, 90_000 + 1000 * i as u64, 20, &[0.0]);
        let m = evaluate_policy(model, &set, &limits, Execution::Parallel).unwrap();
        let visited: u64 = m.instances.iter().map(|x| x.keep_errors.1).sum();
        errors.0 += m.epsilon1 * visited as f64;
        errors.1 += visited as f64;
        points.push((l as f64, m.mean_socp_solves));
    }
    let epsilon1 = if errors.1 > 0.0 { errors.0 / errors.1 } else { 0.0 };
    let n = points.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|(l, s)| (l.ln(), s.ln())).unzip();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let means: Vec<String> = points.iter().map(|(l, s)| format!("L{l}:{s:.1}")).collect();
    verdict(
        epsilon1 <= 0.5 && slope <= 2.3,
        format!(
            "measured eps1 {epsilon1:.3} (needs <= 0.5), log-log slope {slope:.2}; mean socp_solves {}",
            means.join(" ")
        ),
    )
}

fn criterion_8() -> Verdict {
    let start = Instant::now();
    let mut failures = Vec::new();
    let runner = |cases: u32| TestRunner::new(RunnerConfig::with_cases(cases));
    if let Err(e) = runner(16).run(&(0u64..500, 0.01f64..100.0, 0.1f64..10.0), |(seed, c, s)| {
        feature_scale_invariance(seed, c, s)
    }) {
        failures.push(format!("feature scale: {e}"));
    }
    let fixings = (
        0u64..500,
        prop::collection::vec(prop::option::weighted(0.4, any::<bool>()), 3..6),
        any::<bool>(),
    );
    if let Err(e) = runner(16).run(&fixings, |(seed, fixed, extra)| relaxation_monotone(seed, fixed, extra)) {
        failures.push(format!("bound monotonicity: {e}"));
    }
    let svm = (
        prop::collection::vec((prop::array::uniform4(-5.0f64..5.0), any::<bool>()), 2..40),
        prop::collection::vec(prop::array::uniform4(-10.0f64..10.0), 1..20),
        0.1f64..100.0,
        0.01f64..10.0,
    );
    if let Err(e) = runner(16).run(&svm, |(points, probes, c, gamma)| svm_round_trip(points, probes, c, gamma)) {
        failures.push(format!("SVM round trip: {e}"));
    }
    if let Err(e) = runner(2).run(&(0u64..1000), pipeline_deterministic) {
        failures.push(format!("pipeline determinism: {e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        failures.is_empty() && secs < 120.0,
        if failures.is_empty() {
            format!("4 property suites held in {secs:.1}s")
        } else {
            format!("{} after {secs:.1}s", failures.join("; "))
        },
    )
}

fn main() {
    let start = Instant::now();
    let mut verdicts: Vec<(usize, &str, Verdict)> = Vec::new();
    let [c1, c2, c3] = criteria_1_to_3();
    verdicts.push((1, "exact solver matches enumeration", c1));
    verdicts.push((2, "pruning rules are sound", c2));
    verdicts.push((3, "oracle policy solves 2L+1 SOCPs", c3));
    let desk = pipeline(&desk_config());
    verdicts.push((4, "learned policy quality at L=6, K=4", criterion_4(&desk)));
    verdicts.push((5, "train small, test large", criterion_5()));
    verdicts.push((6, "baseline ordering", criterion_6(&desk)));
    verdicts.push((7, "SOCP count grows at most quadratically", criterion_7(&desk.model)));
    verdicts.push((8, "invariant suites", criterion_8()));

    for (id, name, v) in &verdicts {
        println!("criterion {id} [{}] {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    let failed: Vec<usize> = verdicts.iter().filter(|v| !v.2.pass).map(|v| v.0).collect();
    println!(
        "acceptance: {}/{} passed in {:.0}s",
        verdicts.len() - failed.len(),
        verdicts.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
