use serde::{Deserialize, Serialize};

use crate::bnb::SearchNode;
use crate::error::{Error, Result};
use crate::netgen::NetworkInstance;

pub const CORE_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// The four problem-size independent features.
    #[default]
    Canonical,
    /// Canonical features plus normalized depth, plunge depth, incumbent
    /// count and best objective.
    Extended,
}

impl FeatureMode {
    pub fn dim(self) -> usize {
        match self {
            FeatureMode::Canonical => CORE_DIM,
            FeatureMode::Extended => 2 * CORE_DIM,
        }
    }
}

/// Search-tree quantities available when a node is judged.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TreeState {
    pub incumbents_found: u64,
    pub best_objective: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Normalized fronthaul power, normalized channel gain, node objective
    /// over root objective, parent's relaxed value of the branching variable.
    pub core: [f64; CORE_DIM],
    pub tree: [f64; CORE_DIM],
}

impl FeatureVector {
    pub fn input(&self, mode: FeatureMode) -> Vec<f64> {
        match mode {
            FeatureMode::Canonical => self.core.to_vec(),
            FeatureMode::Extended => self.core.iter().chain(&self.tree).copied().collect(),
        }
    }
}

pub fn extract_features(
    instance: &NetworkInstance,
    node: &SearchNode,
    root_objective: f64,
    tree: &TreeState,
) -> Result<FeatureVector> {
    if !(root_objective > 0.0) {
        return Err(Error::Logic(format!("root objective must be positive, got {root_objective}")));
    }
    let i = node
        .branch_index
        .ok_or_else(|| Error::Logic("features need a branching variable".into()))?;
    let relax = node
        .relaxation
        .as_ref()
        .filter(|r| r.is_optimal())
        .ok_or_else(|| Error::Logic("features need a solved, feasible node".into()))?;
    let parent_value = node
        .parent_branch_value
        .ok_or_else(|| Error::Logic("features need the parent's relaxed value".into()))?;

    let l = instance.num_rrh as f64;
    let total_fronthaul: f64 = instance.fronthaul_power.iter().sum();
    let gains = instance.channel_gains();
    let total_gain: f64 = gains.iter().sum();
    let core = [
        l * instance.fronthaul_power[i] / total_fronthaul,
        l * gains[i] / total_gain,
        relax.objective / root_objective,
        parent_value,
    ];
    let tree = [
        node.depth as f64 / l,
        node.plunge_depth as f64 / l,
        tree.incumbents_found as f64,
        tree.best_objective.map_or(0.0, |b| b / root_objective),
    ];
    Ok(FeatureVector { core, tree })
}
