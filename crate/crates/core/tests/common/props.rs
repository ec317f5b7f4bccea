#![allow(dead_code)]

use std::path::Path;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use cranbnb::bench::{cmd_eval, cmd_gen, cmd_label, cmd_train, DatasetLayout, EvalOptions, ExperimentConfig, SplitSizes};
use cranbnb::bnb::{branch, SearchNode};
use cranbnb::conic::{solve_relaxation, Assignment, ModeStatus, SolverTolerances};
use cranbnb::netgen::{GenConfig, NetworkInstance};
use cranbnb::par::Execution;
use cranbnb::policy::{
    extract_features, load_policy, save_policy, train_classifier, Action, FeatureVector, HyperParams, Sample,
    TreeState,
};

use super::{instance, scale_channels, scale_powers};

/// Features of the on-child of the root, branching on RRH 0.
fn child_features(inst: &NetworkInstance) -> Option<FeatureVector> {
    let tol = SolverTolerances::default();
    let mut root = SearchNode::root(inst.num_rrh);
    let r = solve_relaxation(inst, &root.assignment, &tol).unwrap();
    if !r.is_optimal() {
        return None;
    }
    let root_obj = r.objective;
    root.relaxation = Some(r);
    let (_, mut on) = branch(&root, 0).unwrap();
    on.relaxation = Some(solve_relaxation(inst, &on.assignment, &tol).unwrap());
    extract_features(inst, &on, root_obj, &TreeState::default()).ok()
}

pub fn feature_scale_invariance(seed: u64, c: f64, s: f64) -> Result<(), TestCaseError> {
    let inst = instance(4, 3, seed, 0.0);
    let Some(base) = child_features(&inst) else {
        return Ok(());
    };
    for other in [scale_powers(&inst, c), scale_channels(&inst, s)] {
        let f = child_features(&other).ok_or_else(|| TestCaseError::fail("scaled copy became infeasible"))?;
        for j in 0..2 {
            prop_assert!((f.core[j] - base.core[j]).abs() <= 1e-9 * base.core[j].abs().max(1.0));
        }
        for j in 2..4 {
            prop_assert!((f.core[j] - base.core[j]).abs() <= 1e-3, "feature {j}: {} vs {}", f.core[j], base.core[j]);
        }
    }
    Ok(())
}

pub fn relaxation_monotone(seed: u64, fixed: Vec<Option<bool>>, extra: bool) -> Result<(), TestCaseError> {
    let inst = instance(fixed.len(), 3, seed, 2.0);
    let status: Vec<ModeStatus> = fixed
        .iter()
        .map(|f| match f {
            None => ModeStatus::Free,
            Some(false) => ModeStatus::Fixed0,
            Some(true) => ModeStatus::Fixed1,
        })
        .collect();
    let parent = Assignment::from_status(status);
    let Some(i) = parent.first_free() else {
        return Ok(());
    };
    let tol = SolverTolerances::default();
    let p = solve_relaxation(&inst, &parent, &tol).unwrap();
    let child = solve_relaxation(&inst, &parent.with_fixed(i, extra).unwrap(), &tol).unwrap();
    if !p.is_optimal() {
        prop_assert!(!child.is_optimal());
    } else if child.is_optimal() {
        prop_assert!(child.objective >= p.objective - 1e-6 * (1.0 + p.objective.abs()));
    }
    Ok(())
}

pub fn random_samples(points: &[([f64; 4], bool)]) -> Vec<Sample> {
    points
        .iter()
        .enumerate()
        .map(|(i, (x, keep))| Sample {
            features: FeatureVector { core: *x, tree: [0.0; 4] },
            label: if *keep { Action::Keep } else { Action::Prune },
            instance_seed: 0,
            node_id: i,
        })
        .collect()
}

pub fn svm_round_trip(points: Vec<([f64; 4], bool)>, probes: Vec<[f64; 4]>, c: f64, gamma: f64) -> Result<(), TestCaseError> {
    let model = train_classifier(&random_samples(&points), &HyperParams::new(c, gamma), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.json");
    save_policy(&model, &path).unwrap();
    let loaded = load_policy(&path).unwrap();
    prop_assert_eq!(&loaded, &model);
    for x in probes {
        let f = FeatureVector { core: x, tree: [0.0; 4] };
        prop_assert_eq!(loaded.decision_value(&f).to_bits(), model.decision_value(&f).to_bits());
    }
    Ok(())
}

pub fn tiny_experiment(seed: u64, exec: Execution) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        scenario: GenConfig {
            num_rrh: 4,
            num_users: 3,
            ..GenConfig::default()
        },
        tsinr_sweep_db: vec![0.0, 4.0],
        splits: SplitSizes {
            train: 6,
            validation: 3,
            test: 3,
        },
        seed,
        execution: exec,
        ..ExperimentConfig::default()
    };
    cfg.training.hyper_grid = vec![HyperParams::new(10.0, 1.0)];
    cfg.training.retrain_every = 2;
    cfg
}

/// gen → label → train → eval into `root`; returns the results file without wall times.
pub fn run_pipeline(cfg: &ExperimentConfig, root: &Path) -> (Vec<u8>, Vec<u8>, Vec<String>) {
    let layout = DatasetLayout::new(root);
    cmd_gen(cfg, root).unwrap();
    cmd_label(&layout, &cfg.limits, cfg.execution).unwrap();
    let (model, _) = cmd_train(&layout, &cfg.train_run_config()).unwrap();
    let (rows, _) = cmd_eval(&layout, cfg, Some(&model), &EvalOptions::default()).unwrap();
    let rows = rows
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.wall_time_s = 0.0;
            format!("{r:?}")
        })
        .collect();
    (
        std::fs::read(layout.manifest()).unwrap(),
        std::fs::read(layout.policy()).unwrap(),
        rows,
    )
}

pub fn pipeline_deterministic(seed: u64) -> Result<(), TestCaseError> {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let first = run_pipeline(&tiny_experiment(seed, Execution::Parallel), dirs[0].path());
    let second = run_pipeline(&tiny_experiment(seed, Execution::Parallel), dirs[1].path());
    prop_assert_eq!(&first, &second);
    let sequential = run_pipeline(&tiny_experiment(seed, Execution::Sequential), dirs[2].path());
    prop_assert_eq!(first.1, sequential.1);
    prop_assert_eq!(first.2, sequential.2);
    Ok(())
}
