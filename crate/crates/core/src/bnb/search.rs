use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::trace::{NodeOutcome, NodeRecord, OracleTrace, ORACLE_TRACE_VERSION};
use super::{branch, exact_prune, select_variable, Incumbent, PruneDecision, PruneTolerances, SearchNode, SearchStats};
use crate::conic::{solve_relaxation, Assignment, RelaxationResult, SolverTolerances};
use crate::error::{Error, Result};
use crate::netgen::{check_feasible, fronthaul_power, transmit_power, NetworkInstance};
use crate::policy::{extract_features, Action, FeatureVector, PruningPolicy, TreeState};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchLimits {
    pub max_nodes: Option<u64>,
    pub time_limit_s: Option<f64>,
    pub prune: PruneTolerances,
    pub solver: SolverTolerances,
}

/// Relaxation oracle for one instance, optionally memoized by assignment.
///
/// The conic solver is deterministic, so a cached result is bit-identical
/// to a fresh solve; `solver_calls` counts the solves actually performed.
pub struct NodeSolver<'a> {
    instance: &'a NetworkInstance,
    tol: SolverTolerances,
    cache: Option<HashMap<Assignment, RelaxationResult>>,
    solver_calls: u64,
}

impl<'a> NodeSolver<'a> {
    pub fn new(instance: &'a NetworkInstance, tol: SolverTolerances) -> Self {
        NodeSolver {
            instance,
            tol,
            cache: None,
            solver_calls: 0,
        }
    }

    pub fn cached(instance: &'a NetworkInstance, tol: SolverTolerances) -> Self {
        NodeSolver {
            cache: Some(HashMap::new()),
            ..NodeSolver::new(instance, tol)
        }
    }

    pub fn instance(&self) -> &'a NetworkInstance {
        self.instance
    }

    pub fn solver_calls(&self) -> u64 {
        self.solver_calls
    }

    pub fn relax(&mut self, assignment: &Assignment) -> Result<RelaxationResult> {
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(assignment)) {
            return Ok(hit.clone());
        }
        self.solver_calls += 1;
        let result = solve_relaxation(self.instance, assignment, &self.tol)?;
        if let Some(cache) = self.cache.as_mut() {
            cache.insert(assignment.clone(), result.clone());
        }
        Ok(result)
    }
}

/// Decides whether a node that survived the exact pruning rules is expanded.
/// Never consulted at the root.
pub trait NodeController {
    fn expand(&mut self, node: &SearchNode, features: &FeatureVector) -> bool;
}

pub struct ExactController;

impl NodeController for ExactController {
    fn expand(&mut self, _node: &SearchNode, _features: &FeatureVector) -> bool {
        true
    }
}

pub struct PolicyController<'p> {
    pub policy: &'p dyn PruningPolicy,
}

impl NodeController for PolicyController<'_> {
    fn expand(&mut self, node: &SearchNode, features: &FeatureVector) -> bool {
        self.policy.action(node, features) == Action::Keep
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub incumbent: Option<Incumbent>,
    pub stats: SearchStats,
    pub root_objective: Option<f64>,
    pub records: Vec<NodeRecord>,
}

/// Turn an integral relaxation into an incumbent candidate: round the modes,
/// silence switched-off RRHs, and fall back to the fixed SOCP if the
/// rounded point misses feasibility.
fn integral_candidate(
    solver: &mut NodeSolver<'_>,
    relax: &RelaxationResult,
    stats: &mut SearchStats,
) -> Result<Option<Incumbent>> {
    let instance = solver.instance();
    let a: Vec<bool> = relax.a.iter().map(|&v| v > 0.5).collect();
    let a_f: Vec<f64> = a.iter().map(|&on| f64::from(u8::from(on))).collect();
    let mut w = relax.w.clone();
    for (l, &on) in a.iter().enumerate() {
        if !on {
            w.clear_block(instance.antenna_range(l));
        }
    }
    if !check_feasible(instance, &w, &a_f, 1e-5) {
        stats.socp_solves += 1;
        let fixed = solver.relax(&Assignment::from_binary(&a))?;
        if !fixed.is_optimal() {
            return Ok(None);
        }
        w = fixed.w;
    }
    let objective = fronthaul_power(&a_f, instance)? + transmit_power(&w, instance)?;
    Ok(Some(Incumbent { a, w, objective }))
}

/// Depth-first search, on-branch first, branching on the first free RRH.
pub fn run_search(
    solver: &mut NodeSolver<'_>,
    limits: &SearchLimits,
    controller: &mut dyn NodeController,
) -> Result<SearchOutcome> {
    let instance = solver.instance();
    let start = Instant::now();
    let mut stats = SearchStats::default();
    let mut records = Vec::new();
    let mut incumbent: Option<Incumbent> = None;
    let mut root_objective = None;
    let mut tree = TreeState::default();
    let mut stack = vec![SearchNode::root(instance.num_rrh)];
    let mut next_id = 1;
    let mut last_expanded: Option<(usize, usize)> = None;

    while let Some(mut node) = stack.pop() {
        let over_nodes = limits.max_nodes.is_some_and(|m| stats.nodes_visited >= m);
        let over_time = limits
            .time_limit_s
            .is_some_and(|t| start.elapsed().as_secs_f64() > t);
        if over_nodes || over_time {
            stats.wall_time_s = start.elapsed().as_secs_f64();
            return Err(Error::Budget { stats: Box::new(stats) });
        }
        if let Some(parent) = node.parent {
            node.plunge_depth = match last_expanded {
                Some((id, plunge)) if id == parent => plunge + 1,
                _ => 0,
            };
        }
        stats.nodes_visited += 1;
        stats.socp_solves += 1;
        let relax = solver.relax(&node.assignment)?;
        if node.is_root() {
            root_objective = relax.is_optimal().then_some(relax.objective);
        }
        let decision = exact_prune(&relax, &node.assignment, incumbent.as_ref(), &limits.prune);
        let relaxation_objective = relax.is_optimal().then_some(relax.objective);
        let certificate = relax.certificate.clone();
        node.relaxation = Some(relax);

        let outcome = match decision {
            PruneDecision::PruneInfeasible => {
                stats.nodes_pruned_infeasible += 1;
                NodeOutcome::PrunedInfeasible
            }
            PruneDecision::PruneBound => {
                stats.nodes_pruned_bound += 1;
                NodeOutcome::PrunedBound
            }
            PruneDecision::FathomIntegral => {
                stats.nodes_fathomed_integral += 1;
                let relax = node.relaxation.as_ref().expect("just solved");
                if let Some(candidate) = integral_candidate(solver, relax, &mut stats)? {
                    tree.incumbents_found += 1;
                    if incumbent.as_ref().is_none_or(|inc| candidate.objective < inc.objective) {
                        tree.best_objective = Some(candidate.objective);
                        incumbent = Some(candidate);
                        stats.incumbent_updates += 1;
                    }
                }
                NodeOutcome::FathomedIntegral
            }
            PruneDecision::KeepOpen => {
                let expand = match (node.is_root(), root_objective) {
                    (true, _) => true,
                    (false, Some(root_obj)) => {
                        let features = extract_features(instance, &node, root_obj, &tree)?;
                        controller.expand(&node, &features)
                    }
                    (false, None) => return Err(Error::Logic("open node below an infeasible root".into())),
                };
                if expand {
                    let i = select_variable(&node)?;
                    let (mut off, mut on) = branch(&node, i)?;
                    off.id = next_id;
                    on.id = next_id + 1;
                    next_id += 2;
                    stack.push(off);
                    stack.push(on);
                    stats.nodes_expanded += 1;
                    last_expanded = Some((node.id, node.plunge_depth));
                    NodeOutcome::Expanded
                } else {
                    stats.nodes_pruned_policy += 1;
                    NodeOutcome::PrunedPolicy
                }
            }
        };
        records.push(NodeRecord {
            id: node.id,
            parent: node.parent,
            status: node.assignment.status().to_vec(),
            depth: node.depth,
            plunge_depth: node.plunge_depth,
            branch_index: node.branch_index,
            branch_value: node.branch_value,
            relaxation_objective,
            outcome,
            certificate,
        });
    }
    stats.wall_time_s = start.elapsed().as_secs_f64();
    Ok(SearchOutcome {
        incumbent,
        stats,
        root_objective,
        records,
    })
}

#[derive(Debug, Clone)]
pub enum ExactOutcome {
    Solved {
        incumbent: Incumbent,
        stats: SearchStats,
        trace: OracleTrace,
    },
    /// The root relaxation is infeasible, hence so is every mode vector.
    Infeasible { stats: SearchStats },
}

impl ExactOutcome {
    pub fn stats(&self) -> &SearchStats {
        match self {
            ExactOutcome::Solved { stats, .. } | ExactOutcome::Infeasible { stats } => stats,
        }
    }

    pub fn incumbent(&self) -> Option<&Incumbent> {
        match self {
            ExactOutcome::Solved { incumbent, .. } => Some(incumbent),
            ExactOutcome::Infeasible { .. } => None,
        }
    }

    pub fn trace(&self) -> Option<&OracleTrace> {
        match self {
            ExactOutcome::Solved { trace, .. } => Some(trace),
            ExactOutcome::Infeasible { .. } => None,
        }
    }
}

pub fn solve_exact(instance: &NetworkInstance, limits: &SearchLimits) -> Result<ExactOutcome> {
    solve_exact_with(&mut NodeSolver::new(instance, limits.solver), limits)
}

pub fn solve_exact_with(solver: &mut NodeSolver<'_>, limits: &SearchLimits) -> Result<ExactOutcome> {
    let outcome = run_search(solver, limits, &mut ExactController)?;
    match (outcome.incumbent, outcome.root_objective) {
        (Some(incumbent), Some(root_objective)) => {
            let trace = OracleTrace {
                version: ORACLE_TRACE_VERSION.to_string(),
                seed: solver.instance().seed,
                optimal_a: incumbent.a.clone(),
                optimal_objective: incumbent.objective,
                root_objective,
                nodes: outcome.records,
                stats: outcome.stats.clone(),
            };
            Ok(ExactOutcome::Solved {
                incumbent,
                stats: outcome.stats,
                trace,
            })
        }
        (None, None) => Ok(ExactOutcome::Infeasible { stats: outcome.stats }),
        _ => Err(Error::Logic("feasible root relaxation without an incumbent".into())),
    }
}

#[derive(Debug, Clone)]
pub struct PolicyOutcome {
    /// `None` is the NotFound marker.
    pub incumbent: Option<Incumbent>,
    pub stats: SearchStats,
}

pub fn solve_with_policy(
    instance: &NetworkInstance,
    policy: &dyn PruningPolicy,
    limits: &SearchLimits,
) -> Result<PolicyOutcome> {
    solve_with_policy_using(&mut NodeSolver::new(instance, limits.solver), policy, limits)
}

pub fn solve_with_policy_using(
    solver: &mut NodeSolver<'_>,
    policy: &dyn PruningPolicy,
    limits: &SearchLimits,
) -> Result<PolicyOutcome> {
    let outcome = run_search(solver, limits, &mut PolicyController { policy })?;
    Ok(PolicyOutcome {
        incumbent: outcome.incumbent,
        stats: outcome.stats,
    })
}

/// Nodes whose feasible set contains the optimal mode vector `a*`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptimalNodes {
    pub a_star: Vec<bool>,
}

impl OptimalNodes {
    pub fn contains(&self, assignment: &Assignment) -> bool {
        assignment.contains(&self.a_star)
    }
}

pub fn optimal_node_set(trace: &OracleTrace) -> OptimalNodes {
    OptimalNodes {
        a_star: trace.optimal_a.clone(),
    }
}
