//! Soft-margin RBF SVM trained by sequential minimal optimization with
//! second-order working set selection.

use std::collections::{HashMap, VecDeque};
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::model::{ClassWeights, PolicyModel, TrainingMeta, POLICY_FORMAT_VERSION};
use super::{Action, FeatureMode, Sample};
use crate::error::{Error, Result};

const TAU: f64 = 1e-12;
/// Added to the kernel diagonal so duplicated samples never give a singular
/// two-variable subproblem.
const JITTER: f64 = 1e-10;
const ROW_CACHE_BYTES: usize = 256 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub c: f64,
    pub gamma: f64,
    /// KKT violation tolerance of the dual solver.
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_eps() -> f64 {
    1e-3
}

impl HyperParams {
    pub fn new(c: f64, gamma: f64) -> Self {
        HyperParams { c, gamma, eps: default_eps() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.c) && ok(self.gamma) && ok(self.eps)) {
            return Err(Error::Config(format!("SVM hyperparameters must be positive: {self:?}")));
        }
        Ok(())
    }

    /// The validation grid.
    pub fn grid() -> Vec<HyperParams> {
        let mut out = Vec::new();
        for c in [0.1, 1.0, 10.0, 100.0] {
            for gamma in [0.1, 1.0, 10.0] {
                out.push(HyperParams::new(c, gamma));
            }
        }
        out
    }
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams::new(1.0, 1.0)
    }
}

pub(crate) fn rbf(gamma: f64, x: &[f64], z: &[f64]) -> f64 {
    let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

struct KernelRows<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    gamma: f64,
    capacity: usize,
    rows: HashMap<usize, Rc<Vec<f64>>>,
    order: VecDeque<usize>,
}

impl<'a> KernelRows<'a> {
    fn new(x: &'a [Vec<f64>], y: &'a [f64], gamma: f64) -> Self {
        let capacity = (ROW_CACHE_BYTES / (8 * x.len().max(1))).clamp(2, x.len().max(2));
        KernelRows {
            x,
            y,
            gamma,
            capacity,
            rows: HashMap::new(),
            order: VecDeque::new(),
        }
    }

    /// Row `i` of Q = diag(y) K diag(y).
    fn q_row(&mut self, i: usize) -> Rc<Vec<f64>> {
        if let Some(row) = self.rows.get(&i) {
            return Rc::clone(row);
        }
        let xi = &self.x[i];
        let yi = self.y[i];
        let row: Vec<f64> = self
            .x
            .iter()
            .zip(self.y)
            .map(|(xj, &yj)| yi * yj * rbf(self.gamma, xi, xj))
            .collect();
        let row = Rc::new(row);
        if self.rows.len() >= self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.rows.remove(&old);
            }
        }
        self.rows.insert(i, Rc::clone(&row));
        self.order.push_back(i);
        row
    }
}

pub(crate) struct DualSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: u64,
    pub converged: bool,
}

/// Solves min ½αᵀQα − eᵀα s.t. yᵀα = 0, 0 ≤ α ≤ cap.
pub(crate) fn smo(x: &[Vec<f64>], y: &[f64], cap: &[f64], gamma: f64, eps: f64) -> DualSolution {
    let n = x.len();
    let mut kernel = KernelRows::new(x, y, gamma);
    let qd = vec![1.0 + JITTER; n];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let upper = |a: &[f64], t: usize| a[t] >= cap[t];
    let lower = |a: &[f64], t: usize| a[t] <= 0.0;
    let max_iter = (100 * n as u64).max(10_000_000);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let score = -y[t] * grad[t];
            let eligible = if y[t] > 0.0 { !upper(&alpha, t) } else { !lower(&alpha, t) };
            if eligible && score >= gmax {
                gmax = score;
                i_sel = Some(t);
            }
        }
        let Some(i) = i_sel else {
            converged = true;
            break;
        };
        let qi = kernel.q_row(i);
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best = f64::INFINITY;
        for t in 0..n {
            let eligible = if y[t] > 0.0 { !lower(&alpha, t) } else { !upper(&alpha, t) };
            if !eligible {
                continue;
            }
            let yg = y[t] * grad[t];
            gmax2 = gmax2.max(yg);
            let grad_diff = gmax + yg;
            if grad_diff > 0.0 {
                let quad = qd[i] + qd[t] - 2.0 * y[i] * y[t] * qi[t];
                let quad = if quad > 0.0 { quad } else { TAU };
                let obj_diff = -grad_diff * grad_diff / quad;
                if obj_diff <= best {
                    best = obj_diff;
                    j_sel = Some(t);
                }
            }
        }
        let Some(j) = j_sel.filter(|_| gmax + gmax2 >= eps) else {
            converged = true;
            break;
        };
        iterations += 1;
        let qj = kernel.q_row(j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (ci, cj) = (cap[i], cap[j]);
        if y[i] != y[j] {
            let quad = qd[i] + qd[j] + 2.0 * qi[j];
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let quad = qd[i] + qd[j] - 2.0 * qi[j];
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += qi[t] * di + qj[t] * dj;
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut nr_free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(&alpha, t) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(&alpha, t) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            nr_free += 1;
            sum_free += yg;
        }
    }
    let rho = if nr_free > 0 { sum_free / nr_free as f64 } else { (ub + lb) / 2.0 };
    DualSolution {
        alpha,
        rho,
        iterations,
        converged,
    }
}

fn standardize(inputs: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = inputs.len() as f64;
    let dim = inputs[0].len();
    let mut mean = vec![0.0; dim];
    for x in inputs {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n;
        }
    }
    let mut scale = vec![0.0; dim];
    for x in inputs {
        for ((s, v), m) in scale.iter_mut().zip(x).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    for s in &mut scale {
        *s = if s.sqrt() > 1e-12 { s.sqrt() } else { 1.0 };
    }
    (mean, scale)
}

/// Canonical-feature classifier.
pub fn train_classifier(samples: &[Sample], hyper: &HyperParams, seed: u64) -> Result<PolicyModel> {
    train_classifier_with(samples, hyper, FeatureMode::Canonical, seed)
}

pub fn train_classifier_with(
    samples: &[Sample],
    hyper: &HyperParams,
    mode: FeatureMode,
    seed: u64,
) -> Result<PolicyModel> {
    hyper.validate()?;
    if samples.is_empty() {
        return Err(Error::Config("cannot train a classifier on zero samples".into()));
    }
    let inputs: Vec<Vec<f64>> = samples.iter().map(|s| s.features.input(mode)).collect();
    if inputs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Config("training features must be finite".into()));
    }
    let y: Vec<f64> = samples
        .iter()
        .map(|s| if s.label == Action::Keep { 1.0 } else { -1.0 })
        .collect();
    let num_keep = y.iter().filter(|&&v| v > 0.0).count();
    let num_prune = samples.len() - num_keep;
    let total = samples.len() as f64;
    let class_weights = ClassWeights {
        keep: if num_keep > 0 { total / (2.0 * num_keep as f64) } else { 0.0 },
        prune: if num_prune > 0 { total / (2.0 * num_prune as f64) } else { 0.0 },
    };
    let (mean, scale) = standardize(&inputs);
    let mut meta = TrainingMeta {
        seed,
        num_samples: samples.len(),
        num_keep,
        num_prune,
        iterations: 0,
        converged: true,
    };
    let base = PolicyModel {
        version: POLICY_FORMAT_VERSION.to_string(),
        mode,
        hyper: *hyper,
        class_weights,
        mean,
        scale,
        support_vectors: Vec::new(),
        coefficients: Vec::new(),
        bias: 0.0,
        threshold_shift: 0.0,
        meta: meta.clone(),
    };
    if num_keep == 0 || num_prune == 0 {
        let bias = if num_keep > 0 { 1.0 } else { -1.0 };
        return Ok(PolicyModel { bias, ..base });
    }

    let x: Vec<Vec<f64>> = inputs.iter().map(|v| base.standardized(v)).collect();
    let cap: Vec<f64> = y
        .iter()
        .map(|&yi| hyper.c * if yi > 0.0 { class_weights.keep } else { class_weights.prune })
        .collect();
    let dual = smo(&x, &y, &cap, hyper.gamma, hyper.eps);
    if !dual.converged {
        log::warn!("SVM dual solver hit its iteration cap after {} steps", dual.iterations);
    }
    meta.iterations = dual.iterations;
    meta.converged = dual.converged;
    let mut support_vectors = Vec::new();
    let mut coefficients = Vec::new();
    for ((xi, &yi), &ai) in x.into_iter().zip(&y).zip(&dual.alpha) {
        if ai > 0.0 {
            support_vectors.push(xi);
            coefficients.push(yi * ai);
        }
    }
    Ok(PolicyModel {
        support_vectors,
        coefficients,
        bias: -dual.rho,
        meta,
        ..base
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smo_two_points_matches_closed_form() {
        // x = ±1 on a line: the optimum has α₁ = α₂ = 1 / (1 − K₁₂), ρ = 0
        let gamma = 0.5;
        let x = vec![vec![1.0], vec![-1.0]];
        let y = vec![1.0, -1.0];
        let dual = smo(&x, &y, &[1e6, 1e6], gamma, 1e-9);
        let k12 = (-gamma * 4.0f64).exp();
        let expect = 1.0 / (1.0 + JITTER - k12);
        assert!(dual.converged);
        assert!((dual.alpha[0] - expect).abs() < 1e-6, "{:?}", dual.alpha);
        assert!((dual.alpha[1] - expect).abs() < 1e-6);
        assert!(dual.rho.abs() < 1e-9);
    }

    #[test]
    fn box_constraint_is_respected() {
        let x = vec![vec![0.0], vec![0.1], vec![0.05], vec![0.2]];
        let y = vec![1.0, -1.0, -1.0, 1.0];
        let cap = [0.5, 0.5, 0.25, 0.25];
        let dual = smo(&x, &y, &cap, 1.0, 1e-6);
        for (a, c) in dual.alpha.iter().zip(cap) {
            assert!(*a >= 0.0 && *a <= c + 1e-15);
        }
        let balance: f64 = dual.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(balance.abs() < 1e-12);
    }

    #[test]
    fn grid_has_twelve_points() {
        assert_eq!(HyperParams::grid().len(), 12);
        assert!(HyperParams::new(0.0, 1.0).validate().is_err());
    }
}
