mod common;

use common::instance;
use cranbnb::baselines::*;
use cranbnb::bnb::{solve_exact, SearchLimits};
use cranbnb::conic::{solve_fixed, SolverTolerances};
use cranbnb::netgen::{check_feasible, fronthaul_power, transmit_power, Beamformer, NetworkInstance};
use cranbnb::Error;
use num_complex::Complex64;

fn tol() -> SolverTolerances {
    SolverTolerances::default()
}

fn assert_consistent(inst: &NetworkInstance, res: &HeuristicResult) {
    let a: Vec<f64> = res.a.iter().map(|&on| f64::from(u8::from(on))).collect();
    assert!(check_feasible(inst, &res.w, &a, 1e-5));
    let objective = fronthaul_power(&a, inst).unwrap() + transmit_power(&res.w, inst).unwrap();
    assert!((objective - res.objective).abs() <= 1e-9 * objective);
}

#[test]
fn heuristics_never_beat_the_exact_optimum() {
    for seed in 0..8u64 {
        let inst = instance(4 + (seed as usize % 3), 3 + (seed as usize % 2), 700 + seed, 2.0 * (seed % 3) as f64);
        let Some(exact) = solve_exact(&inst, &SearchLimits::default()).unwrap().incumbent().cloned() else {
            continue;
        };
        let slack = 1e-6 * exact.objective;
        for res in [
            rminlp(&inst, &RminlpConfig::default(), &tol()).unwrap(),
            gsbf(&inst, &GsbfConfig::default(), &tol()).unwrap(),
        ] {
            assert!(res.is_feasible());
            assert!(res.objective >= exact.objective - slack, "seed {seed}");
            assert_consistent(&inst, &res);
        }
    }
}

#[test]
fn gsbf_is_no_worse_than_all_on() {
    for seed in 10..14u64 {
        let inst = instance(5, 4, seed, 0.0);
        let res = gsbf(&inst, &GsbfConfig::default(), &tol()).unwrap();
        let all_on = solve_fixed(&inst, &[true; 5], &tol()).unwrap();
        assert!(res.objective <= all_on.objective * (1.0 + 1e-6));
        let rounds = GsbfConfig::default().rounds as u64;
        assert!((rounds + 1..=rounds + 5).contains(&res.socp_solves));
    }
}

#[test]
fn single_rrh_stays_on() {
    let (inst, best) = (0..50)
        .find_map(|seed| {
            let inst = instance(1, 2, seed, 0.0);
            let exact = solve_exact(&inst, &SearchLimits::default()).unwrap();
            exact.incumbent().map(|i| (inst.clone(), i.objective))
        })
        .expect("a feasible single-RRH draw");
    for res in [
        rminlp(&inst, &RminlpConfig::default(), &tol()).unwrap(),
        gsbf(&inst, &GsbfConfig::default(), &tol()).unwrap(),
    ] {
        assert_eq!(res.a, vec![true]);
        assert!((res.objective - best).abs() <= 1e-6 * best);
    }
}

#[test]
fn infeasible_instances_are_reported() {
    let inst = instance(3, 4, 9, 40.0);
    assert!(!rminlp(&inst, &RminlpConfig::default(), &tol()).unwrap().is_feasible());
    let res = gsbf(&inst, &GsbfConfig::default(), &tol()).unwrap();
    assert!(!res.is_feasible());
    assert!(res.objective.is_infinite());
}

#[test]
fn invalid_gsbf_settings_are_rejected() {
    let inst = instance(3, 2, 1, 0.0);
    let bad = GsbfConfig { rounds: 0, delta: 1e-8 };
    assert!(matches!(gsbf(&inst, &bad, &tol()), Err(Error::Config(_))));
    let bad = GsbfConfig { rounds: 3, delta: 0.0 };
    assert!(matches!(gsbf(&inst, &bad, &tol()), Err(Error::Config(_))));
}

#[test]
fn priority_weighs_beam_norm_by_gain_over_fronthaul() {
    let inst = NetworkInstance {
        num_rrh: 2,
        num_users: 1,
        antennas: vec![1, 1],
        channels: vec![vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 2.0)]],
        noise_vars: vec![1.0],
        max_tx_power: vec![1.0, 1.0],
        fronthaul_power: vec![1.0, 16.0],
        amp_efficiency: vec![0.25, 0.25],
        sinr_targets: vec![1.0],
        seed: 0,
        config: None,
    };
    let w = Beamformer::from_vec(2, 1, vec![Complex64::new(0.3, 0.4), Complex64::new(0.0, 1.0)]).unwrap();
    let p = gsbf_priority(&inst, &w);
    assert!((p[0] - 0.5).abs() < 1e-12);
    assert!((p[1] - 0.5).abs() < 1e-12);
    let w = Beamformer::from_vec(2, 1, vec![Complex64::new(0.3, 0.4), Complex64::new(0.0, 2.0)]).unwrap();
    let p = gsbf_priority(&inst, &w);
    assert!(p[0] < p[1]);
}
