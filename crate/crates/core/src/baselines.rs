//! Deflation heuristics used as comparison points: relaxation-guided
//! switch-off (RMINLP) and group-sparse beamforming (GSBF).

use serde::{Deserialize, Serialize};

use crate::conic::{
    beamformer_from, build_group_sparse, solve_conic, solve_fixed, solve_relaxation, Assignment, RelaxStatus,
    SolverTolerances,
};
use crate::error::{Error, Result};
use crate::netgen::{fronthaul_power, transmit_power, Beamformer, NetworkInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeuristicStatus {
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicResult {
    pub a: Vec<bool>,
    pub w: Beamformer,
    /// `+∞` when infeasible.
    pub objective: f64,
    pub socp_solves: u64,
    pub status: HeuristicStatus,
}

impl HeuristicResult {
    fn infeasible(instance: &NetworkInstance, socp_solves: u64) -> Self {
        HeuristicResult {
            a: vec![false; instance.num_rrh],
            w: Beamformer::zeros(instance.total_antennas(), instance.num_users),
            objective: f64::INFINITY,
            socp_solves,
            status: HeuristicStatus::Infeasible,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status == HeuristicStatus::Feasible
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RminlpConfig {
    /// A relaxed solution within this distance of binary ends the deflation.
    pub int_tol: f64,
}

impl Default for RminlpConfig {
    fn default() -> Self {
        RminlpConfig { int_tol: 1e-5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GsbfConfig {
    pub rounds: usize,
    pub delta: f64,
}

impl Default for GsbfConfig {
    fn default() -> Self {
        GsbfConfig { rounds: 3, delta: 1e-8 }
    }
}

/// Fixed-mode solve scored by `f1 + f2`; `None` if infeasible.
fn score_fixed(instance: &NetworkInstance, a: &[bool], tol: &SolverTolerances) -> Result<Option<(Beamformer, f64)>> {
    let fixed = solve_fixed(instance, a, tol)?;
    if !fixed.is_optimal() {
        return Ok(None);
    }
    let a_f: Vec<f64> = a.iter().map(|&on| f64::from(u8::from(on))).collect();
    let objective = fronthaul_power(&a_f, instance)? + transmit_power(&fixed.w, instance)?;
    Ok(Some((fixed.w, objective)))
}

/// Switch off the free RRH with the smallest relaxed mode, one at a time,
/// until the relaxation turns infeasible or integral.
pub fn rminlp(instance: &NetworkInstance, cfg: &RminlpConfig, tol: &SolverTolerances) -> Result<HeuristicResult> {
    let mut assignment = Assignment::root(instance.num_rrh);
    let mut relax = solve_relaxation(instance, &assignment, tol)?;
    let mut solves = 1;
    if !relax.is_optimal() {
        return Ok(HeuristicResult::infeasible(instance, solves));
    }
    let final_a: Vec<bool> = loop {
        let free: Vec<usize> = (0..instance.num_rrh).filter(|&l| assignment.is_free(l)).collect();
        let integral = free
            .iter()
            .all(|&l| relax.a[l] <= cfg.int_tol || relax.a[l] >= 1.0 - cfg.int_tol);
        if integral {
            break relax.a.iter().map(|&v| v > 0.5).collect();
        }
        let weakest = free
            .iter()
            .copied()
            .min_by(|&x, &y| relax.a[x].total_cmp(&relax.a[y]))
            .expect("a non-integral relaxation has a free mode");
        let candidate = assignment.with_fixed(weakest, false)?;
        let next = solve_relaxation(instance, &candidate, tol)?;
        solves += 1;
        if !next.is_optimal() {
            break assignment.status().iter().map(|s| s.fixed_value() != Some(false)).collect();
        }
        assignment = candidate;
        relax = next;
    };
    solves += 1;
    match score_fixed(instance, &final_a, tol)? {
        Some((w, objective)) => Ok(HeuristicResult {
            a: final_a,
            w,
            objective,
            socp_solves: solves,
            status: HeuristicStatus::Feasible,
        }),
        None => Err(Error::Logic("rounded-up RMINLP configuration is infeasible".into())),
    }
}

/// Switch-off priority `‖w_l‖ · √(Σ_k‖h_lk‖²) / √P^c_l`; smaller goes first.
pub fn gsbf_priority(instance: &NetworkInstance, w: &Beamformer) -> Vec<f64> {
    let gains = instance.channel_gains();
    (0..instance.num_rrh)
        .map(|l| {
            let norm = w.block_energy(instance.antenna_range(l)).sqrt();
            norm * gains[l].sqrt() / instance.fronthaul_power[l].sqrt()
        })
        .collect()
}

/// Reweighted group-sparse beamforming followed by ordered deflation.
pub fn gsbf(instance: &NetworkInstance, cfg: &GsbfConfig, tol: &SolverTolerances) -> Result<HeuristicResult> {
    if cfg.rounds == 0 || !(cfg.delta > 0.0) {
        return Err(Error::Config(format!("invalid GSBF settings {cfg:?}")));
    }
    let gains = instance.channel_gains();
    let rho0: Vec<f64> = (0..instance.num_rrh)
        .map(|l| (instance.fronthaul_power[l] / gains[l]).sqrt())
        .collect();
    let normalize = |rho: Vec<f64>| -> Vec<f64> {
        let top = rho.iter().copied().fold(0.0, f64::max);
        rho.into_iter().map(|r| r / top).collect()
    };
    let mut rho = normalize(rho0.clone());
    let mut solves = 0;
    let mut w = None;
    for _ in 0..cfg.rounds {
        let program = build_group_sparse(instance, &rho)?;
        let sol = solve_conic(&program, tol)?;
        solves += 1;
        if sol.status == RelaxStatus::Infeasible {
            return Ok(HeuristicResult::infeasible(instance, solves));
        }
        let beam = beamformer_from(&program, &sol.x);
        rho = normalize(
            (0..instance.num_rrh)
                .map(|l| rho0[l] / (beam.block_energy(instance.antenna_range(l)).sqrt() + cfg.delta))
                .collect(),
        );
        w = Some(beam);
    }
    let priority = gsbf_priority(instance, &w.expect("at least one round"));
    let mut order: Vec<usize> = (0..instance.num_rrh).collect();
    order.sort_by(|&x, &y| priority[x].total_cmp(&priority[y]).then(x.cmp(&y)));

    let mut a = vec![true; instance.num_rrh];
    solves += 1;
    let Some((w, objective)) = score_fixed(instance, &a, tol)? else {
        return Ok(HeuristicResult::infeasible(instance, solves));
    };
    let mut best = (a.clone(), w, objective);
    for &l in order.iter().take(instance.num_rrh - 1) {
        a[l] = false;
        solves += 1;
        match score_fixed(instance, &a, tol)? {
            Some((w, objective)) => {
                if objective < best.2 {
                    best = (a.clone(), w, objective);
                }
            }
            None => break,
        }
    }
    Ok(HeuristicResult {
        a: best.0,
        w: best.1,
        objective: best.2,
        socp_solves: solves,
        status: HeuristicStatus::Feasible,
    })
}
