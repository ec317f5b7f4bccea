#![allow(dead_code)]

pub mod props;

use cranbnb::bnb::{solve_exact, ExactOutcome, SearchLimits};
use cranbnb::conic::{solve_fixed, solve_relaxation, Assignment, SolverTolerances};
use cranbnb::dagger::LabeledInstance;
use cranbnb::netgen::{generate_instance, GenConfig, NetworkInstance};

pub fn instance(l: usize, k: usize, seed: u64, tsinr_db: f64) -> NetworkInstance {
    let cfg = GenConfig {
        num_rrh: l,
        num_users: k,
        tsinr_db,
        ..GenConfig::default()
    };
    generate_instance(&cfg, seed).unwrap()
}

/// Brute force over all `2^L` mode vectors with one fixed SOCP each.
pub fn enumerate_optimum(inst: &NetworkInstance) -> Option<(Vec<bool>, f64)> {
    let l = inst.num_rrh;
    let tol = SolverTolerances::default();
    let mut best: Option<(Vec<bool>, f64)> = None;
    for mask in 0u32..(1 << l) {
        let a: Vec<bool> = (0..l).map(|i| mask >> i & 1 == 1).collect();
        let r = solve_fixed(inst, &a, &tol).unwrap();
        if r.is_optimal() && best.as_ref().is_none_or(|b| r.objective < b.1) {
            best = Some((a, r.objective));
        }
    }
    best
}

/// The 20-instance correctness set: L in {4,5,6}, K in {3,4}, TSINR in {0,4} dB.
pub fn correctness_set() -> Vec<NetworkInstance> {
    let mut combos = Vec::new();
    for l in [4, 5, 6] {
        for k in [3, 4] {
            for db in [0.0, 4.0] {
                combos.push((l, k, db));
            }
        }
    }
    (0..20u64)
        .map(|i| {
            let (l, k, db) = combos[i as usize % combos.len()];
            instance(l, k, 500 + i, db)
        })
        .collect()
}

pub fn root_feasible(inst: &NetworkInstance) -> bool {
    solve_relaxation(inst, &Assignment::root(inst.num_rrh), &SolverTolerances::default())
        .unwrap()
        .is_optimal()
}

/// Labeled instances from consecutive seeds, skipping infeasible draws.
pub fn labeled(l: usize, k: usize, first_seed: u64, count: usize, sweep: &[f64]) -> Vec<LabeledInstance> {
    let mut out = Vec::new();
    let mut seed = first_seed;
    while out.len() < count {
        let inst = instance(l, k, seed, sweep[out.len() % sweep.len()]);
        seed += 1;
        if let ExactOutcome::Solved { trace, .. } = solve_exact(&inst, &SearchLimits::default()).unwrap() {
            out.push(LabeledInstance { instance: inst, trace });
        }
    }
    out
}

/// Same network with every power quantity multiplied by `c`.
pub fn scale_powers(inst: &NetworkInstance, c: f64) -> NetworkInstance {
    let mut out = inst.clone();
    out.fronthaul_power.iter_mut().for_each(|p| *p *= c);
    out.max_tx_power.iter_mut().for_each(|p| *p *= c);
    out.noise_vars.iter_mut().for_each(|p| *p *= c);
    out
}

/// Same network with channels scaled by `s` and noise by `s²`.
pub fn scale_channels(inst: &NetworkInstance, s: f64) -> NetworkInstance {
    let mut out = inst.clone();
    for row in &mut out.channels {
        row.iter_mut().for_each(|h| *h *= s);
    }
    out.noise_vars.iter_mut().for_each(|p| *p *= s * s);
    out
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}
