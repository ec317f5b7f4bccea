use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{build_fixed, build_relaxation, Assignment, ConeKind, ConicProgram};
use crate::error::{Error, Result};
use crate::netgen::{Beamformer, NetworkInstance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverTolerances {
    pub abs: f64,
    pub rel: f64,
    pub feas: f64,
    pub max_iter: u32,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        SolverTolerances {
            abs: 1e-8,
            rel: 1e-7,
            feas: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelaxStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationResult {
    pub status: RelaxStatus,
    /// Relaxed modes in `[0, 1]`; fixed entries are exact.
    pub a: Vec<f64>,
    pub w: Beamformer,
    /// `c*_P`, or `+∞` when infeasible.
    pub objective: f64,
    pub iterations: u32,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Farkas vector `y` with `A^T y = 0`, `b^T y < 0`, `y ∈ K*` when infeasible.
    pub certificate: Option<Vec<f64>>,
}

impl RelaxationResult {
    pub fn is_optimal(&self) -> bool {
        self.status == RelaxStatus::Optimal
    }
}

fn to_csc(program: &ConicProgram) -> CscMatrix<f64> {
    let mut triplets: Vec<(usize, usize, f64)> = program
        .rows
        .iter()
        .enumerate()
        .flat_map(|(r, row)| row.iter().map(move |&(c, v)| (c, r, v)))
        .filter(|t| t.2 != 0.0)
        .collect();
    triplets.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    let mut colptr = vec![0usize; program.num_vars + 1];
    let mut rowval = Vec::with_capacity(triplets.len());
    let mut nzval: Vec<f64> = Vec::with_capacity(triplets.len());
    let mut last: Option<(usize, usize)> = None;
    for (c, r, v) in triplets {
        if last == Some((c, r)) {
            *nzval.last_mut().expect("duplicate follows an entry") += v;
            continue;
        }
        last = Some((c, r));
        colptr[c + 1] += 1;
        rowval.push(r);
        nzval.push(v);
    }
    for c in 0..program.num_vars {
        colptr[c + 1] += colptr[c];
    }
    CscMatrix::new(program.num_rows(), program.num_vars, colptr, rowval, nzval)
}

/// `max(‖A^T y‖∞, cone violation) / (−b^T y)`, or `+∞` if `b^T y ≥ 0`.
pub fn farkas_residual(program: &ConicProgram, y: &[f64]) -> f64 {
    if y.len() != program.num_rows() {
        return f64::INFINITY;
    }
    let by: f64 = program.rhs.iter().zip(y).map(|(b, y)| b * y).sum();
    if !(by < 0.0) {
        return f64::INFINITY;
    }
    let mut aty = vec![0.0; program.num_vars];
    for (row, &yr) in program.rows.iter().zip(y) {
        for &(c, v) in row {
            aty[c] += v * yr;
        }
    }
    let mut worst = aty.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut start = 0;
    for cone in &program.cones {
        let block = &y[start..start + cone.dim];
        let violation = match cone.kind {
            ConeKind::Zero => 0.0,
            ConeKind::Nonnegative => block.iter().fold(0.0f64, |m, v| m.max(-v)),
            ConeKind::SecondOrder => {
                let tail = block[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                (tail - block[0]).max(0.0)
            }
        };
        worst = worst.max(violation);
        start += cone.dim;
    }
    worst / -by
}

fn clarabel_cones(program: &ConicProgram) -> Vec<SupportedConeT<f64>> {
    program
        .cones
        .iter()
        .map(|c| match c.kind {
            ConeKind::Zero => SupportedConeT::ZeroConeT(c.dim),
            ConeKind::Nonnegative => SupportedConeT::NonnegativeConeT(c.dim),
            ConeKind::SecondOrder => SupportedConeT::SecondOrderConeT(c.dim),
        })
        .collect()
}

/// Raw outcome of a conic solve, before mapping back to instance quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: RelaxStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub certificate: Option<Vec<f64>>,
}

/// Interior-point solve of `program`. Optimal or certified infeasible, or a
/// `NonConverged` error.
pub fn solve_conic(program: &ConicProgram, tol: &SolverTolerances) -> Result<ConicSolution> {
    program.validate()?;
    let p = CscMatrix::new_from_triplets(program.num_vars, program.num_vars, vec![], vec![], vec![]);
    let a = to_csc(program);
    let cones = clarabel_cones(program);
    let settings = DefaultSettings {
        verbose: false,
        max_iter: tol.max_iter,
        tol_gap_abs: tol.abs,
        tol_gap_rel: tol.rel,
        tol_feas: tol.feas,
        tol_infeas_abs: tol.abs,
        tol_infeas_rel: tol.abs,
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(&p, &program.objective, &a, &program.rhs, &cones, settings)
        .map_err(|e| Error::NonConverged(format!("solver setup failed: {e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => Ok(ConicSolution {
            status: RelaxStatus::Optimal,
            objective: program.objective_at(&sol.x),
            x: sol.x.clone(),
            iterations: sol.iterations,
            primal_residual: sol.r_prim,
            dual_residual: sol.r_dual,
            certificate: None,
        }),
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => Ok(ConicSolution {
            status: RelaxStatus::Infeasible,
            objective: f64::INFINITY,
            x: sol.x.clone(),
            iterations: sol.iterations,
            primal_residual: sol.r_prim,
            dual_residual: sol.r_dual,
            certificate: Some(sol.z.clone()),
        }),
        other => Err(Error::NonConverged(format!(
            "status {other:?} after {} iterations",
            sol.iterations
        ))),
    }
}

/// The beamformer block of a primal point of `program`.
pub fn beamformer_from(program: &ConicProgram, x: &[f64]) -> Beamformer {
    let layout = &program.layout;
    let (n, k_count) = (layout.num_antennas, layout.num_users);
    let w: Vec<Complex64> = (0..k_count)
        .flat_map(|k| (0..n).map(move |m| (k, m)))
        .map(|(k, m)| {
            let c = layout.w_col(k, m);
            Complex64::new(x[c], x[c + 1])
        })
        .collect();
    Beamformer::from_vec(n, k_count, w).expect("layout matches")
}

fn to_relaxation(
    program: &ConicProgram,
    max_power: &[f64],
    assignment: &Assignment,
    sol: ConicSolution,
) -> RelaxationResult {
    let layout = &program.layout;
    let (n, k_count) = (layout.num_antennas, layout.num_users);
    let a_off = layout.a_offset.expect("relaxation program");
    let num_rrh = layout.num_rrh;
    if sol.status == RelaxStatus::Infeasible {
        return RelaxationResult {
            status: RelaxStatus::Infeasible,
            a: assignment
                .status()
                .iter()
                .map(|s| s.fixed_value().map_or(f64::NAN, |v| if v { 1.0 } else { 0.0 }))
                .collect(),
            w: Beamformer::zeros(n, k_count),
            objective: f64::INFINITY,
            iterations: sol.iterations,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            certificate: sol.certificate,
        };
    }
    let mut w = beamformer_from(program, &sol.x);
    // Switched-off RRHs carry no signal; free modes are lifted to cover the
    // interior-point residue so that `‖w_l‖² ≤ a_l P_l` holds exactly.
    let mut a = Vec::with_capacity(num_rrh);
    for l in 0..num_rrh {
        let start = layout.antenna_offsets[l];
        let range = start..start + layout.antennas[l];
        match assignment.get(l).fixed_value() {
            Some(false) => {
                w.clear_block(range);
                a.push(0.0);
            }
            Some(true) => a.push(1.0),
            None => {
                let needed = (w.block_energy(range) / max_power[l]).sqrt();
                a.push(sol.x[a_off + l].max(needed).clamp(0.0, 1.0));
            }
        }
    }
    RelaxationResult {
        status: RelaxStatus::Optimal,
        a,
        w,
        objective: sol.objective,
        iterations: sol.iterations,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        certificate: None,
    }
}

/// Build and solve the node relaxation for `assignment`.
pub fn solve_relaxation(
    instance: &NetworkInstance,
    assignment: &Assignment,
    tol: &SolverTolerances,
) -> Result<RelaxationResult> {
    let program = build_relaxation(instance, assignment)?;
    let sol = solve_conic(&program, tol)?;
    Ok(to_relaxation(&program, &instance.max_tx_power, assignment, sol))
}

/// Solve the problem with every mode pinned to `a`; the objective includes
/// the constant fronthaul term.
pub fn solve_fixed(instance: &NetworkInstance, a: &[bool], tol: &SolverTolerances) -> Result<RelaxationResult> {
    let program = build_fixed(instance, a)?;
    let sol = solve_conic(&program, tol)?;
    Ok(to_relaxation(&program, &instance.max_tx_power, &Assignment::from_binary(a), sol))
}
