//! Imitation learning of the pruning policy with dataset aggregation.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bnb::{
    optimal_node_set, run_search, NodeController, NodeSolver, OptimalNodes, OracleTrace, SearchLimits, SearchNode,
};
use crate::error::{Error, Result};
use crate::netgen::NetworkInstance;
use crate::par::{self, Execution};
use crate::policy::{
    oracle_action, predict, train_classifier_with, Action, FeatureMode, FeatureVector, HyperParams, PolicyModel,
    PruningPolicy, Sample,
};

pub const TRAINING_REPORT_VERSION: &str = "v1";

/// An instance together with its exact-search trace.
#[derive(Debug, Clone)]
pub struct LabeledInstance {
    pub instance: NetworkInstance,
    pub trace: OracleTrace,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainRunConfig {
    pub hyper_grid: Vec<HyperParams>,
    pub limits: SearchLimits,
    /// Retrain after every `retrain_every` training problems.
    pub retrain_every: usize,
    pub feature_mode: FeatureMode,
    /// Largest tolerated fraction of validation optimal nodes the tuned
    /// threshold may prune.
    pub max_optimal_prune_rate: f64,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        TrainRunConfig {
            hyper_grid: HyperParams::grid(),
            limits: SearchLimits::default(),
            retrain_every: 1,
            feature_mode: FeatureMode::Canonical,
            max_optimal_prune_rate: 0.05,
            seed: 0,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregatedDataset {
    pub samples: Vec<Sample>,
    /// `|𝒟^(p)|` per training problem, in order.
    pub partition_sizes: Vec<usize>,
}

impl AggregatedDataset {
    pub fn extend(&mut self, batch: Vec<Sample>) {
        self.partition_sizes.push(batch.len());
        self.samples.extend(batch);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Training-time controller: expands optimal nodes and nodes the current
/// policy keeps, recording the oracle label wherever the two disagree.
/// Without a policy it follows the oracle and records every decision.
struct DaggerController<'a> {
    optimal: &'a OptimalNodes,
    policy: Option<&'a PolicyModel>,
    seed: u64,
    samples: Vec<Sample>,
    disagreements: usize,
}

impl NodeController for DaggerController<'_> {
    fn expand(&mut self, node: &SearchNode, features: &FeatureVector) -> bool {
        let oracle = oracle_action(node, self.optimal);
        let action = self.policy.map_or(oracle, |p| predict(p, features));
        if action != oracle {
            self.disagreements += 1;
        }
        if self.policy.is_none() || action != oracle {
            self.samples.push(Sample {
                features: *features,
                label: oracle,
                instance_seed: self.seed,
                node_id: node.id,
            });
        }
        oracle == Action::Keep || action == Action::Keep
    }
}

/// Oracle-labeled samples at every decision point of the oracle trajectory.
pub fn oracle_samples(labeled: &LabeledInstance, limits: &SearchLimits) -> Result<Vec<Sample>> {
    let optimal = optimal_node_set(&labeled.trace);
    let mut controller = DaggerController {
        optimal: &optimal,
        policy: None,
        seed: labeled.instance.seed,
        samples: Vec::new(),
        disagreements: 0,
    };
    run_search(&mut NodeSolver::new(&labeled.instance, limits.solver), limits, &mut controller)?;
    Ok(controller.samples)
}

/// Exact-search numbers a policy run is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactReference {
    pub objective: f64,
    pub socp_solves: u64,
}

impl From<&OracleTrace> for ExactReference {
    fn from(trace: &OracleTrace) -> Self {
        ExactReference {
            objective: trace.optimal_objective,
            socp_solves: trace.stats.socp_solves,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetrics {
    pub seed: u64,
    pub tsinr_db: f64,
    /// `None` is NotFound.
    pub objective: Option<f64>,
    pub exact_objective: f64,
    pub socp_solves: u64,
    pub exact_socp_solves: u64,
    /// `None` is NotFound (infinite gap).
    pub gap: Option<f64>,
    pub speedup: f64,
    pub wall_time_s: f64,
    pub budget_exhausted: bool,
    /// Non-optimal nodes kept / non-optimal nodes judged.
    pub keep_errors: (u64, u64),
    /// Optimal nodes pruned / optimal nodes judged.
    pub prune_errors: (u64, u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerAtTsinr {
    pub tsinr_db: f64,
    pub mean_power_w: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub instances: Vec<InstanceMetrics>,
    pub not_found: usize,
    /// Mean over instances where an incumbent was found; `+∞` if none.
    pub mean_gap: f64,
    /// Mean of per-instance socp-solve ratios.
    pub mean_speedup: f64,
    pub mean_socp_solves: f64,
    pub mean_exact_socp_solves: f64,
    /// Ratio of mean exact to mean policy socp solves.
    pub socp_reduction: f64,
    /// Expansion error: rate of keeping non-optimal nodes.
    pub epsilon1: f64,
    /// Rate of pruning optimal nodes.
    pub epsilon2: f64,
    pub power_by_tsinr: Vec<PowerAtTsinr>,
}

pub fn tsinr_db_of(instance: &NetworkInstance) -> f64 {
    let db = 10.0 * instance.sinr_targets.first().copied().unwrap_or(1.0).log10();
    (db * 1e9).round() / 1e9
}

struct MeasuringController<'a> {
    policy: &'a dyn PruningPolicy,
    optimal: &'a OptimalNodes,
    keep_errors: (u64, u64),
    prune_errors: (u64, u64),
}

impl NodeController for MeasuringController<'_> {
    fn expand(&mut self, node: &SearchNode, features: &FeatureVector) -> bool {
        let action = self.policy.action(node, features);
        if oracle_action(node, self.optimal) == Action::Keep {
            self.prune_errors.1 += 1;
            self.prune_errors.0 += u64::from(action == Action::Prune);
        } else {
            self.keep_errors.1 += 1;
            self.keep_errors.0 += u64::from(action == Action::Keep);
        }
        action == Action::Keep
    }
}

fn evaluate_one(policy: &dyn PruningPolicy, labeled: &LabeledInstance, limits: &SearchLimits) -> Result<InstanceMetrics> {
    let reference = ExactReference::from(&labeled.trace);
    let optimal = optimal_node_set(&labeled.trace);
    let mut controller = MeasuringController {
        policy,
        optimal: &optimal,
        keep_errors: (0, 0),
        prune_errors: (0, 0),
    };
    let mut solver = NodeSolver::new(&labeled.instance, limits.solver);
    let start = Instant::now();
    let (objective, socp_solves, budget_exhausted) = match run_search(&mut solver, limits, &mut controller) {
        Ok(out) => (out.incumbent.map(|i| i.objective), out.stats.socp_solves, false),
        Err(Error::Budget { stats }) => (None, stats.socp_solves, true),
        Err(e) => return Err(e),
    };
    let gap = objective.map(|o| (o - reference.objective) / reference.objective);
    Ok(InstanceMetrics {
        seed: labeled.instance.seed,
        tsinr_db: tsinr_db_of(&labeled.instance),
        objective,
        exact_objective: reference.objective,
        socp_solves,
        exact_socp_solves: reference.socp_solves,
        gap,
        speedup: reference.socp_solves as f64 / socp_solves.max(1) as f64,
        wall_time_s: start.elapsed().as_secs_f64(),
        budget_exhausted,
        keep_errors: controller.keep_errors,
        prune_errors: controller.prune_errors,
    })
}

pub fn summarize(instances: Vec<InstanceMetrics>) -> Metrics {
    let n = instances.len().max(1) as f64;
    let gaps: Vec<f64> = instances.iter().filter_map(|m| m.gap).collect();
    let mean_gap = if gaps.is_empty() {
        f64::INFINITY
    } else {
        gaps.iter().sum::<f64>() / gaps.len() as f64
    };
    let mean_socp_solves = instances.iter().map(|m| m.socp_solves as f64).sum::<f64>() / n;
    let mean_exact_socp_solves = instances.iter().map(|m| m.exact_socp_solves as f64).sum::<f64>() / n;
    let rate = |pick: fn(&InstanceMetrics) -> (u64, u64)| {
        let (bad, total) = instances
            .iter()
            .map(pick)
            .fold((0, 0), |acc, (b, t)| (acc.0 + b, acc.1 + t));
        if total == 0 {
            0.0
        } else {
            bad as f64 / total as f64
        }
    };
    let mut power_by_tsinr: Vec<PowerAtTsinr> = Vec::new();
    for m in &instances {
        let Some(objective) = m.objective else { continue };
        match power_by_tsinr.iter_mut().find(|p| p.tsinr_db == m.tsinr_db) {
            Some(p) => {
                p.mean_power_w += objective;
                p.count += 1;
            }
            None => power_by_tsinr.push(PowerAtTsinr {
                tsinr_db: m.tsinr_db,
                mean_power_w: objective,
                count: 1,
            }),
        }
    }
    for p in &mut power_by_tsinr {
        p.mean_power_w /= p.count as f64;
    }
    power_by_tsinr.sort_by(|x, y| x.tsinr_db.total_cmp(&y.tsinr_db));
    Metrics {
        not_found: instances.iter().filter(|m| m.objective.is_none()).count(),
        mean_gap,
        mean_speedup: instances.iter().map(|m| m.speedup).sum::<f64>() / n,
        mean_socp_solves,
        mean_exact_socp_solves,
        socp_reduction: mean_exact_socp_solves / mean_socp_solves.max(1.0),
        epsilon1: rate(|m| m.keep_errors),
        epsilon2: rate(|m| m.prune_errors),
        power_by_tsinr,
        instances,
    }
}

/// Runs `policy` on every instance and compares with its exact trace.
pub fn evaluate_policy(
    policy: &dyn PruningPolicy,
    instances: &[LabeledInstance],
    limits: &SearchLimits,
    exec: Execution,
) -> Result<Metrics> {
    let rows = par::map(exec, instances, |li| evaluate_one(policy, li, limits));
    Ok(summarize(rows.into_iter().collect::<Result<Vec<_>>>()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub k: usize,
    pub not_found: usize,
    pub mean_gap: f64,
    pub mean_speedup: f64,
}

impl From<(usize, &Metrics)> for CandidateScore {
    fn from((k, m): (usize, &Metrics)) -> Self {
        CandidateScore {
            k,
            not_found: m.not_found,
            mean_gap: m.mean_gap,
            mean_speedup: m.mean_speedup,
        }
    }
}

/// Fewest NotFound, then lowest mean gap, then highest mean speedup, then
/// earliest candidate.
pub fn validation_select(scores: &[CandidateScore]) -> Option<usize> {
    (0..scores.len()).min_by(|&x, &y| {
        let (a, b) = (&scores[x], &scores[y]);
        a.not_found
            .cmp(&b.not_found)
            .then(a.mean_gap.total_cmp(&b.mean_gap))
            .then(b.mean_speedup.total_cmp(&a.mean_speedup))
            .then(a.k.cmp(&b.k))
            .then(x.cmp(&y))
    })
}

/// Lowers the decision threshold until at most `max_rate` of `keep`
/// samples fall below it. Never raises it above zero.
pub fn tune_threshold(model: &PolicyModel, keep: &[Sample], max_rate: f64) -> f64 {
    if model.is_constant() || keep.is_empty() {
        return 0.0;
    }
    let mut decisions: Vec<f64> = keep.iter().map(|s| model.decision_value(&s.features)).collect();
    decisions.sort_by(f64::total_cmp);
    let allowed = (max_rate * decisions.len() as f64).floor() as usize;
    decisions[allowed.min(decisions.len() - 1)].min(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub k: usize,
    pub instance_seed: u64,
    pub disagreements: usize,
    pub new_samples: usize,
    pub dataset_size: usize,
    pub nodes_visited: u64,
    pub budget_exhausted: bool,
    pub retrained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    /// Index of the policy `π^(k)`.
    pub k: usize,
    pub num_samples: usize,
    pub threshold_shift: f64,
    pub not_found: usize,
    pub mean_gap: f64,
    pub mean_speedup: f64,
    pub socp_reduction: f64,
    pub epsilon1: f64,
    pub epsilon2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub hyper: HyperParams,
    pub iterations: Vec<IterationReport>,
    pub candidates: Vec<CandidateReport>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub version: String,
    pub seed: u64,
    /// Iterations before the first classifier exists follow the oracle and
    /// record every decision with its oracle label.
    pub bootstrap_iterations: usize,
    pub retrain_every: usize,
    pub grid: Vec<GridReport>,
    pub chosen_grid_index: usize,
    pub chosen_k: usize,
    pub chosen_hyper: HyperParams,
    pub total_samples: usize,
    pub total_nodes_visited: u64,
    pub validation_keep_samples: usize,
    pub wall_time_s: f64,
}

impl TrainingReport {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

struct GridOutcome {
    report: GridReport,
    models: Vec<PolicyModel>,
    bootstrap_iterations: usize,
    total_samples: usize,
    total_nodes: u64,
}

fn run_grid_point(
    config: &TrainRunConfig,
    hyper: &HyperParams,
    train: &[LabeledInstance],
    validation: &[LabeledInstance],
    val_keep: &[Sample],
) -> Result<GridOutcome> {
    let start = Instant::now();
    let mut dataset = AggregatedDataset::default();
    let mut policy: Option<PolicyModel> = None;
    let mut models = Vec::new();
    let mut iterations = Vec::new();
    let mut candidates = Vec::new();
    let mut bootstrap_iterations = 0;
    let mut total_nodes = 0;
    let retrain_every = config.retrain_every.max(1);

    for (idx, labeled) in train.iter().enumerate() {
        let k = idx + 1;
        let optimal = optimal_node_set(&labeled.trace);
        let mut controller = DaggerController {
            optimal: &optimal,
            policy: policy.as_ref(),
            seed: labeled.instance.seed,
            samples: Vec::new(),
            disagreements: 0,
        };
        if policy.is_none() {
            bootstrap_iterations += 1;
        }
        let mut solver = NodeSolver::new(&labeled.instance, config.limits.solver);
        let (visited, budget_exhausted) = match run_search(&mut solver, &config.limits, &mut controller) {
            Ok(out) => (out.stats.nodes_visited, false),
            Err(Error::Budget { stats }) => {
                log::warn!("training instance {} exhausted its budget; skipped", labeled.instance.seed);
                (stats.nodes_visited, true)
            }
            Err(e) => return Err(e),
        };
        total_nodes += visited;
        let disagreements = controller.disagreements;
        let batch = if budget_exhausted { Vec::new() } else { controller.samples };
        let new_samples = batch.len();
        dataset.extend(batch);
        let retrain = !dataset.is_empty() && (k % retrain_every == 0 || k == train.len());
        if retrain {
            let mut model = train_classifier_with(&dataset.samples, hyper, config.feature_mode, config.seed)?;
            model.threshold_shift = tune_threshold(&model, val_keep, config.max_optimal_prune_rate);
            let metrics = evaluate_policy(&model, validation, &config.limits, config.execution)?;
            candidates.push(CandidateReport {
                k: k + 1,
                num_samples: dataset.len(),
                threshold_shift: model.threshold_shift,
                not_found: metrics.not_found,
                mean_gap: metrics.mean_gap,
                mean_speedup: metrics.mean_speedup,
                socp_reduction: metrics.socp_reduction,
                epsilon1: metrics.epsilon1,
                epsilon2: metrics.epsilon2,
            });
            models.push(model.clone());
            policy = Some(model);
        }
        iterations.push(IterationReport {
            k,
            instance_seed: labeled.instance.seed,
            disagreements,
            new_samples,
            dataset_size: dataset.len(),
            nodes_visited: visited,
            budget_exhausted,
            retrained: retrain,
        });
    }
    Ok(GridOutcome {
        report: GridReport {
            hyper: *hyper,
            iterations,
            candidates,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
        models,
        bootstrap_iterations,
        total_samples: dataset.len(),
        total_nodes,
    })
}

/// Runs the aggregation loop once per grid point and returns the candidate
/// policy that scores best on the validation set.
pub fn dagger_train(
    config: &TrainRunConfig,
    train: &[LabeledInstance],
    validation: &[LabeledInstance],
) -> Result<(PolicyModel, TrainingReport)> {
    if train.is_empty() {
        return Err(Error::Config("DAgger needs at least one training instance".into()));
    }
    if validation.is_empty() {
        return Err(Error::Config("DAgger needs at least one validation instance".into()));
    }
    if config.hyper_grid.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let train_seeds: std::collections::HashSet<u64> = train.iter().map(|l| l.instance.seed).collect();
    if validation.iter().any(|l| train_seeds.contains(&l.instance.seed)) {
        return Err(Error::Config("training and validation seeds overlap".into()));
    }
    let start = Instant::now();
    let val_keep: Vec<Sample> = par::map(config.execution, validation, |l| oracle_samples(l, &config.limits))
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .filter(|s| s.label == Action::Keep)
        .collect();

    let outcomes = par::map(config.execution, &config.hyper_grid, |h| {
        run_grid_point(config, h, train, validation, &val_keep)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut flat = Vec::new();
    let mut scores = Vec::new();
    for (g, outcome) in outcomes.iter().enumerate() {
        for (c, cand) in outcome.report.candidates.iter().enumerate() {
            flat.push((g, c));
            scores.push(CandidateScore {
                k: cand.k,
                not_found: cand.not_found,
                mean_gap: cand.mean_gap,
                mean_speedup: cand.mean_speedup,
            });
        }
    }
    let best = validation_select(&scores)
        .ok_or_else(|| Error::Config("no classifier was trained; every training run produced zero samples".into()))?;
    let (g, c) = flat[best];
    let model = outcomes[g].models[c].clone();
    let total_samples = outcomes[g].total_samples;
    let total_nodes_visited = outcomes[g].total_nodes;
    debug_assert!(total_samples as u64 <= total_nodes_visited);
    let report = TrainingReport {
        version: TRAINING_REPORT_VERSION.to_string(),
        seed: config.seed,
        bootstrap_iterations: outcomes[g].bootstrap_iterations,
        retrain_every: config.retrain_every.max(1),
        chosen_grid_index: g,
        chosen_k: scores[best].k,
        chosen_hyper: config.hyper_grid[g],
        total_samples,
        total_nodes_visited,
        validation_keep_samples: val_keep.len(),
        grid: outcomes.into_iter().map(|o| o.report).collect(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}
