//! Real-valued second-order cone programs for the node relaxations and the
//! fixed-mode subproblem.
//!
//! Variables are laid out as `x = [w | a | t]`: `2·N·K` real beamformer
//! entries (user-major, each complex entry as `re, im`), `L` mode variables
//! and `L` per-RRH transmit-energy epigraph variables. Constraints follow the
//! `A x + s = b, s ∈ K` convention with cones ordered zero, nonnegative,
//! then second-order.
//!
//! A complex inner product `h^H w` is realified as
//! `Re = h_re·w_re + h_im·w_im`, `Im = h_re·w_im − h_im·w_re`.

mod solver;

pub use solver::{
    beamformer_from, farkas_residual, solve_conic, solve_fixed, solve_relaxation, RelaxStatus, RelaxationResult,
    SolverTolerances,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgen::NetworkInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModeStatus {
    Free,
    Fixed0,
    Fixed1,
}

impl ModeStatus {
    pub fn fixed_value(self) -> Option<bool> {
        match self {
            ModeStatus::Free => None,
            ModeStatus::Fixed0 => Some(false),
            ModeStatus::Fixed1 => Some(true),
        }
    }
}

/// Per-RRH fixings `a_[Z] = z`; the root is all-`Free`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    status: Vec<ModeStatus>,
}

impl Assignment {
    pub fn root(num_rrh: usize) -> Self {
        Assignment {
            status: vec![ModeStatus::Free; num_rrh],
        }
    }

    pub fn from_binary(a: &[bool]) -> Self {
        Assignment {
            status: a
                .iter()
                .map(|&on| if on { ModeStatus::Fixed1 } else { ModeStatus::Fixed0 })
                .collect(),
        }
    }

    pub fn from_status(status: Vec<ModeStatus>) -> Self {
        Assignment { status }
    }

    pub fn len(&self) -> usize {
        self.status.len()
    }

    pub fn is_empty(&self) -> bool {
        self.status.is_empty()
    }

    pub fn status(&self) -> &[ModeStatus] {
        &self.status
    }

    pub fn get(&self, i: usize) -> ModeStatus {
        self.status[i]
    }

    pub fn is_free(&self, i: usize) -> bool {
        self.status[i] == ModeStatus::Free
    }

    /// Number of fixed variables, i.e. `|Z|`.
    pub fn depth(&self) -> usize {
        self.status.iter().filter(|s| **s != ModeStatus::Free).count()
    }

    pub fn is_complete(&self) -> bool {
        self.status.iter().all(|s| *s != ModeStatus::Free)
    }

    pub fn first_free(&self) -> Option<usize> {
        self.status.iter().position(|s| *s == ModeStatus::Free)
    }

    pub fn with_fixed(&self, i: usize, value: bool) -> Result<Self> {
        match self.status.get(i) {
            None => Err(Error::Logic(format!("RRH index {i} out of range"))),
            Some(ModeStatus::Free) => {
                let mut status = self.status.clone();
                status[i] = if value { ModeStatus::Fixed1 } else { ModeStatus::Fixed0 };
                Ok(Assignment { status })
            }
            Some(_) => Err(Error::Logic(format!("RRH {i} is already fixed"))),
        }
    }

    /// True iff the binary vector `a` satisfies every fixing.
    pub fn contains(&self, a: &[bool]) -> bool {
        a.len() == self.status.len()
            && self
                .status
                .iter()
                .zip(a)
                .all(|(s, &v)| s.fixed_value().is_none_or(|z| z == v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeKind {
    Zero,
    Nonnegative,
    SecondOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeBlock {
    pub kind: ConeKind,
    pub dim: usize,
}

/// Index bookkeeping linking program variables back to instance quantities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarLayout {
    pub num_rrh: usize,
    pub num_users: usize,
    pub num_antennas: usize,
    pub antenna_offsets: Vec<usize>,
    pub antennas: Vec<usize>,
    /// Start of the mode variables, absent for programs without them.
    pub a_offset: Option<usize>,
    /// Start of the per-RRH auxiliary variables (energy epigraph or group norm).
    pub aux_offset: usize,
}

impl VarLayout {
    fn new(instance: &NetworkInstance, with_modes: bool) -> Self {
        let n = instance.total_antennas();
        let w_len = 2 * n * instance.num_users;
        VarLayout {
            num_rrh: instance.num_rrh,
            num_users: instance.num_users,
            num_antennas: n,
            antenna_offsets: instance.antenna_offsets(),
            antennas: instance.antennas.clone(),
            a_offset: with_modes.then_some(w_len),
            aux_offset: if with_modes { w_len + instance.num_rrh } else { w_len },
        }
    }

    pub fn w_len(&self) -> usize {
        2 * self.num_antennas * self.num_users
    }

    /// Column of `Re(w_k[n])`; the imaginary part is the next column.
    pub fn w_col(&self, k: usize, n: usize) -> usize {
        2 * (k * self.num_antennas + n)
    }

    pub fn num_vars(&self) -> usize {
        self.aux_offset + self.num_rrh
    }
}

/// Standard-form container: minimize `c^T x` s.t. `A x + s = b`, `s ∈ K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    /// Sparse rows of `A` as `(column, value)` lists, one per slack entry.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
    pub cones: Vec<ConeBlock>,
    pub layout: VarLayout,
}

impl ConicProgram {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn count_cones(&self, kind: ConeKind) -> usize {
        self.cones.iter().filter(|c| c.kind == kind).count()
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.num_vars {
            return Err(Error::dimension("objective", self.num_vars, self.objective.len()));
        }
        if self.rhs.len() != self.rows.len() {
            return Err(Error::dimension("rhs", self.rows.len(), self.rhs.len()));
        }
        let cone_rows: usize = self.cones.iter().map(|c| c.dim).sum();
        if cone_rows != self.rows.len() {
            return Err(Error::dimension("cone rows", self.rows.len(), cone_rows));
        }
        if self.rows.iter().flatten().any(|&(c, v)| c >= self.num_vars || !v.is_finite())
            || self.objective.iter().chain(&self.rhs).any(|v| !v.is_finite())
        {
            return Err(Error::Logic("program has out-of-range columns or non-finite data".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Incremental row builder that keeps cone blocks aligned with their rows.
pub(crate) struct ProgramBuilder {
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    cones: Vec<ConeBlock>,
}

impl ProgramBuilder {
    pub(crate) fn new() -> Self {
        ProgramBuilder {
            rows: Vec::new(),
            rhs: Vec::new(),
            cones: Vec::new(),
        }
    }

    pub(crate) fn push_row(&mut self, row: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(row);
        self.rhs.push(rhs);
    }

    /// Close the rows pushed since the previous cone into a cone of `kind`.
    pub(crate) fn close(&mut self, kind: ConeKind) {
        let used: usize = self.cones.iter().map(|c| c.dim).sum();
        let dim = self.rows.len() - used;
        if dim > 0 {
            self.cones.push(ConeBlock { kind, dim });
        }
    }

    pub(crate) fn finish(self, objective: Vec<f64>, layout: VarLayout) -> ConicProgram {
        ConicProgram {
            num_vars: layout.num_vars(),
            objective,
            rows: self.rows,
            rhs: self.rhs,
            cones: self.cones,
            layout,
        }
    }
}

/// Rows of the SINR cones `√γ_k ‖(h_k^H w_i)_{i≠k}, σ_k‖ ≤ Re(h_k^H w_k)`,
/// written with channels scaled by `1/σ_k`.
pub(crate) fn push_sinr_cones(builder: &mut ProgramBuilder, instance: &NetworkInstance, layout: &VarLayout) {
    let n = layout.num_antennas;
    for k in 0..instance.num_users {
        let sigma = instance.noise_vars[k].sqrt();
        let g: Vec<(f64, f64)> = instance.channels[k]
            .iter()
            .map(|h| (h.re / sigma, h.im / sigma))
            .collect();
        let inv_sqrt_gamma = 1.0 / instance.sinr_targets[k].sqrt();
        let real_part = |user: usize, scale: f64| -> Vec<(usize, f64)> {
            (0..n)
                .flat_map(|m| {
                    let c = layout.w_col(user, m);
                    [(c, -scale * g[m].0), (c + 1, -scale * g[m].1)]
                })
                .collect()
        };
        let imag_part = |user: usize| -> Vec<(usize, f64)> {
            (0..n)
                .flat_map(|m| {
                    let c = layout.w_col(user, m);
                    [(c, g[m].1), (c + 1, -g[m].0)]
                })
                .collect()
        };
        builder.push_row(real_part(k, inv_sqrt_gamma), 0.0);
        for i in (0..instance.num_users).filter(|&i| i != k) {
            builder.push_row(real_part(i, 1.0), 0.0);
            builder.push_row(imag_part(i), 0.0);
        }
        builder.push_row(Vec::new(), 1.0);
        builder.close(ConeKind::SecondOrder);
    }
}

/// Rows `s = w_l` (all users) for RRH `l`, scaled by `scale`.
pub(crate) fn rrh_block_rows(layout: &VarLayout, l: usize, scale: f64) -> Vec<Vec<(usize, f64)>> {
    let start = layout.antenna_offsets[l];
    let mut rows = Vec::new();
    for k in 0..layout.num_users {
        for m in start..start + layout.antennas[l] {
            let c = layout.w_col(k, m);
            rows.push(vec![(c, -scale)]);
            rows.push(vec![(c + 1, -scale)]);
        }
    }
    rows
}

/// Convex relaxation of the node problem: binary `a` relaxed to `[0, 1]`
/// except the fixed entries, which are pinned by equality.
pub fn build_relaxation(instance: &NetworkInstance, assignment: &Assignment) -> Result<ConicProgram> {
    if assignment.len() != instance.num_rrh {
        return Err(Error::dimension("assignment", instance.num_rrh, assignment.len()));
    }
    let layout = VarLayout::new(instance, true);
    let a_off = layout.a_offset.expect("relaxation has mode variables");
    let t_off = layout.aux_offset;
    let mut b = ProgramBuilder::new();

    for (l, s) in assignment.status().iter().enumerate() {
        if let Some(v) = s.fixed_value() {
            b.push_row(vec![(a_off + l, 1.0)], if v { 1.0 } else { 0.0 });
        }
    }
    b.close(ConeKind::Zero);

    for l in (0..instance.num_rrh).filter(|&l| assignment.is_free(l)) {
        b.push_row(vec![(a_off + l, -1.0)], 0.0);
        b.push_row(vec![(a_off + l, 1.0)], 1.0);
    }
    b.close(ConeKind::Nonnegative);

    push_sinr_cones(&mut b, instance, &layout);

    // ‖w_l‖ ≤ √P_l · a_l
    for l in 0..instance.num_rrh {
        b.push_row(vec![(a_off + l, -instance.max_tx_power[l].sqrt())], 0.0);
        for row in rrh_block_rows(&layout, l, 1.0) {
            b.push_row(row, 0.0);
        }
        b.close(ConeKind::SecondOrder);
    }

    // ‖w_l‖² ≤ t_l  ⇔  ‖(2 w_l, t_l − 1)‖ ≤ t_l + 1
    for l in 0..instance.num_rrh {
        b.push_row(vec![(t_off + l, -1.0)], 1.0);
        for row in rrh_block_rows(&layout, l, 2.0) {
            b.push_row(row, 0.0);
        }
        b.push_row(vec![(t_off + l, -1.0)], -1.0);
        b.close(ConeKind::SecondOrder);
    }

    let mut objective = vec![0.0; layout.num_vars()];
    for l in 0..instance.num_rrh {
        objective[a_off + l] = instance.fronthaul_power[l];
        objective[t_off + l] = 1.0 / instance.amp_efficiency[l];
    }
    let program = b.finish(objective, layout);
    program.validate()?;
    Ok(program)
}

/// The fixed-mode SOCP: the relaxation with every `a_l` pinned.
pub fn build_fixed(instance: &NetworkInstance, a: &[bool]) -> Result<ConicProgram> {
    if a.len() != instance.num_rrh {
        return Err(Error::dimension("mode vector", instance.num_rrh, a.len()));
    }
    build_relaxation(instance, &Assignment::from_binary(a))
}

/// Weighted group-norm program `min Σ ρ_l ‖w_l‖` subject to the SINR cones
/// and `‖w_l‖ ≤ √P_l`. The auxiliary variables hold the group norms.
pub fn build_group_sparse(instance: &NetworkInstance, weights: &[f64]) -> Result<ConicProgram> {
    if weights.len() != instance.num_rrh {
        return Err(Error::dimension("group weights", instance.num_rrh, weights.len()));
    }
    let layout = VarLayout::new(instance, false);
    let s_off = layout.aux_offset;
    let mut b = ProgramBuilder::new();
    push_sinr_cones(&mut b, instance, &layout);
    for l in 0..instance.num_rrh {
        b.push_row(Vec::new(), instance.max_tx_power[l].sqrt());
        for row in rrh_block_rows(&layout, l, 1.0) {
            b.push_row(row, 0.0);
        }
        b.close(ConeKind::SecondOrder);
        b.push_row(vec![(s_off + l, -1.0)], 0.0);
        for row in rrh_block_rows(&layout, l, 1.0) {
            b.push_row(row, 0.0);
        }
        b.close(ConeKind::SecondOrder);
    }
    let mut objective = vec![0.0; layout.num_vars()];
    objective[s_off..s_off + instance.num_rrh].copy_from_slice(weights);
    let program = b.finish(objective, layout);
    program.validate()?;
    Ok(program)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::{generate_instance, GenConfig};

    fn small(l: usize, k: usize, n: usize) -> NetworkInstance {
        let cfg = GenConfig {
            num_rrh: l,
            num_users: k,
            antennas_per_rrh: n,
            ..GenConfig::default()
        };
        generate_instance(&cfg, 17).unwrap()
    }

    #[test]
    fn single_link_program_shape() {
        let inst = small(1, 1, 1);
        let p = build_relaxation(&inst, &Assignment::root(1)).unwrap();
        // Re w, Im w, a, t
        assert_eq!(p.num_vars, 4);
        assert_eq!(p.count_cones(ConeKind::SecondOrder), 3);
        assert_eq!(p.count_cones(ConeKind::Zero), 0);
        assert_eq!(p.count_cones(ConeKind::Nonnegative), 1);
        p.validate().unwrap();
    }

    #[test]
    fn fixings_become_equalities() {
        let inst = small(3, 2, 2);
        let asg = Assignment::root(3).with_fixed(0, true).unwrap().with_fixed(2, false).unwrap();
        let p = build_relaxation(&inst, &asg).unwrap();
        assert_eq!(p.cones[0], ConeBlock { kind: ConeKind::Zero, dim: 2 });
        assert_eq!(p.cones[1], ConeBlock { kind: ConeKind::Nonnegative, dim: 2 });
        assert_eq!(p.rhs[0], 1.0);
        assert_eq!(p.rhs[1], 0.0);
        // K SINR cones + L per-RRH cones + L epigraph cones
        assert_eq!(p.count_cones(ConeKind::SecondOrder), 2 + 3 + 3);
    }

    #[test]
    fn assignment_fixing_rules() {
        let root = Assignment::root(3);
        assert_eq!(root.depth(), 0);
        let child = root.with_fixed(1, true).unwrap();
        assert_eq!(child.depth(), 1);
        assert!(child.with_fixed(1, false).is_err());
        assert!(child.contains(&[false, true, true]));
        assert!(!child.contains(&[false, false, true]));
        assert_eq!(child.first_free(), Some(0));
    }

    #[test]
    fn program_dump_is_json() {
        let inst = small(2, 2, 1);
        let p = build_relaxation(&inst, &Assignment::root(2)).unwrap();
        let back: ConicProgram = serde_json::from_str(&p.to_json().unwrap()).unwrap();
        assert_eq!(p, back);
    }
}
