use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SearchStats;
use crate::conic::{Assignment, ModeStatus};
use crate::error::{Error, Result};

pub const ORACLE_TRACE_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeOutcome {
    Expanded,
    PrunedBound,
    PrunedInfeasible,
    PrunedPolicy,
    FathomedIntegral,
}

/// One visited node, in visit order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub status: Vec<ModeStatus>,
    pub depth: usize,
    pub plunge_depth: usize,
    pub branch_index: Option<usize>,
    pub branch_value: Option<bool>,
    /// `None` when the relaxation is infeasible.
    pub relaxation_objective: Option<f64>,
    pub outcome: NodeOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Vec<f64>>,
}

impl NodeRecord {
    pub fn assignment(&self) -> Assignment {
        Assignment::from_status(self.status.clone())
    }
}

/// Exact-search record used to label training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTrace {
    pub version: String,
    pub seed: u64,
    pub optimal_a: Vec<bool>,
    pub optimal_objective: f64,
    pub root_objective: f64,
    pub nodes: Vec<NodeRecord>,
    pub stats: SearchStats,
}

impl OracleTrace {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let load_err = |reason: String| Error::Load {
            path: path.to_path_buf(),
            reason,
        };
        let text = std::fs::read_to_string(path)?;
        let trace: OracleTrace = serde_json::from_str(&text).map_err(|e| load_err(e.to_string()))?;
        if trace.version != ORACLE_TRACE_VERSION {
            return Err(load_err(format!("unsupported trace version {:?}", trace.version)));
        }
        Ok(trace)
    }
}
