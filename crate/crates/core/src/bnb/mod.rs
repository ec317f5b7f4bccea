//! Depth-first branch-and-bound over the binary RRH modes.
//!
//! The same search skeleton drives the exact solver, the learned-policy
//! solver and the data-collection runs used for imitation learning; they
//! differ only in the [`NodeController`] consulted at nodes that survive the
//! exact pruning rules.

mod search;
mod trace;

pub use search::{
    optimal_node_set, run_search, solve_exact, solve_exact_with, solve_with_policy,
    solve_with_policy_using, ExactController, ExactOutcome, NodeController, NodeSolver, OptimalNodes,
    PolicyController, PolicyOutcome, SearchLimits, SearchOutcome,
};
pub use trace::{NodeOutcome, NodeRecord, OracleTrace, ORACLE_TRACE_VERSION};

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::conic::{Assignment, RelaxStatus, RelaxationResult};
use crate::error::{Error, Result};
use crate::netgen::Beamformer;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub assignment: Assignment,
    pub depth: usize,
    pub plunge_depth: usize,
    pub branch_index: Option<usize>,
    pub branch_value: Option<bool>,
    /// Relaxed value of the branching variable in the parent's solution.
    pub parent_branch_value: Option<f64>,
    pub relaxation: Option<RelaxationResult>,
}

impl SearchNode {
    pub fn root(num_rrh: usize) -> Self {
        SearchNode {
            id: 0,
            parent: None,
            assignment: Assignment::root(num_rrh),
            depth: 0,
            plunge_depth: 0,
            branch_index: None,
            branch_value: None,
            parent_branch_value: None,
            relaxation: None,
        }
    }

    pub fn is_root(&self) -> bool {
        self.parent.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Incumbent {
    pub a: Vec<bool>,
    pub w: Beamformer,
    pub objective: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub nodes_visited: u64,
    pub nodes_expanded: u64,
    pub socp_solves: u64,
    pub nodes_pruned_bound: u64,
    pub nodes_pruned_infeasible: u64,
    pub nodes_pruned_policy: u64,
    pub nodes_fathomed_integral: u64,
    pub incumbent_updates: u64,
    pub wall_time_s: f64,
}

impl SearchStats {
    pub fn wall_time(&self) -> Duration {
        Duration::from_secs_f64(self.wall_time_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PruneDecision {
    KeepOpen,
    PruneBound,
    PruneInfeasible,
    FathomIntegral,
}

/// Integrality and bound tolerances for the exact pruning rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PruneTolerances {
    pub int_tol: f64,
    /// Bound pruning fires when `c*_P > c* − gap_rel·(1 + |c*|)`.
    pub gap_rel: f64,
}

impl Default for PruneTolerances {
    fn default() -> Self {
        PruneTolerances {
            int_tol: 1e-5,
            gap_rel: 1e-6,
        }
    }
}

/// First free RRH index.
pub fn select_variable(node: &SearchNode) -> Result<usize> {
    node.assignment
        .first_free()
        .ok_or_else(|| Error::Logic("cannot branch a fully fixed node".into()))
}

/// Children `(a_i = 0, a_i = 1)` of `node`. Ids are left for the caller.
pub fn branch(node: &SearchNode, i: usize) -> Result<(SearchNode, SearchNode)> {
    let parent_value = node
        .relaxation
        .as_ref()
        .filter(|r| r.is_optimal())
        .map(|r| r.a[i]);
    let child = |value: bool| -> Result<SearchNode> {
        Ok(SearchNode {
            id: 0,
            parent: Some(node.id),
            assignment: node.assignment.with_fixed(i, value)?,
            depth: node.depth + 1,
            plunge_depth: 0,
            branch_index: Some(i),
            branch_value: Some(value),
            parent_branch_value: parent_value,
            relaxation: None,
        })
    };
    Ok((child(false)?, child(true)?))
}

/// The exact pruning rules applied to a freshly solved node.
pub fn exact_prune(
    result: &RelaxationResult,
    assignment: &Assignment,
    incumbent: Option<&Incumbent>,
    tol: &PruneTolerances,
) -> PruneDecision {
    if result.status == RelaxStatus::Infeasible {
        return PruneDecision::PruneInfeasible;
    }
    if let Some(inc) = incumbent {
        if result.objective > inc.objective - tol.gap_rel * (1.0 + inc.objective.abs()) {
            return PruneDecision::PruneBound;
        }
    }
    let integral = (0..assignment.len())
        .filter(|&l| assignment.is_free(l))
        .all(|l| {
            let v = result.a[l];
            v <= tol.int_tol || v >= 1.0 - tol.int_tol
        });
    if integral {
        PruneDecision::FathomIntegral
    } else {
        PruneDecision::KeepOpen
    }
}
