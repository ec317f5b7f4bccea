//! Node features, the oracle labeling rule and the learned pruning
//! classifier.

mod features;
mod model;
mod svm;

pub use features::{extract_features, FeatureMode, FeatureVector, TreeState, CORE_DIM};
pub use model::{load_policy, predict, save_policy, ClassWeights, PolicyModel, TrainingMeta, POLICY_FORMAT_VERSION};
pub use svm::{train_classifier, train_classifier_with, HyperParams};

use serde::{Deserialize, Serialize};

use crate::bnb::{OptimalNodes, SearchNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Prune,
    Keep,
}

/// Maps a node that survived the exact rules to prune / keep.
pub trait PruningPolicy: Sync {
    fn action(&self, node: &SearchNode, features: &FeatureVector) -> Action;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstantPolicy(pub Action);

impl PruningPolicy for ConstantPolicy {
    fn action(&self, _node: &SearchNode, _features: &FeatureVector) -> Action {
        self.0
    }
}

/// Keeps exactly the optimal nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OraclePolicy(pub OptimalNodes);

impl PruningPolicy for OraclePolicy {
    fn action(&self, node: &SearchNode, _features: &FeatureVector) -> Action {
        oracle_action(node, &self.0)
    }
}

pub fn oracle_action(node: &SearchNode, optimal: &OptimalNodes) -> Action {
    if optimal.contains(&node.assignment) {
        Action::Keep
    } else {
        Action::Prune
    }
}

impl PruningPolicy for PolicyModel {
    fn action(&self, _node: &SearchNode, features: &FeatureVector) -> Action {
        predict(self, features)
    }
}

/// A labeled training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: FeatureVector,
    pub label: Action,
    pub instance_seed: u64,
    pub node_id: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnb::branch;

    #[test]
    fn oracle_labels_follow_the_optimal_path() {
        let optimal = OptimalNodes { a_star: vec![true, false] };
        let root = SearchNode::root(2);
        assert_eq!(oracle_action(&root, &optimal), Action::Keep);
        let (off, on) = branch(&root, 0).unwrap();
        assert_eq!(oracle_action(&on, &optimal), Action::Keep);
        assert_eq!(oracle_action(&off, &optimal), Action::Prune);
        let (off2, on2) = branch(&on, 1).unwrap();
        let keeps = [&off2, &on2]
            .iter()
            .filter(|n| oracle_action(n, &optimal) == Action::Keep)
            .count();
        assert_eq!(keeps, 1);
        assert_eq!(oracle_action(&off2, &optimal), Action::Keep);
    }
}
