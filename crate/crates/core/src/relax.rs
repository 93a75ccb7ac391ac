//! Lagrangian relaxation solved by average-cost policy iteration.
//!
//! The per-slot cost is `q + eta * P_s`; with `eta = alpha * A * mu` the
//! average cost of a policy equals `alpha * A * D + eta * P`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{closed_classes, evaluate, transition_matrix};
use crate::error::{Error, Result};
use crate::model::{ModelParams, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Solve the bias of each improved policy exactly (with `h(0) = 0`).
    #[default]
    ExactEval,
    /// One Bellman backup per iteration; stops once the greedy policy is
    /// stable and the relative values have stopped moving.
    SingleBackup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxSolution {
    pub policy: Policy,
    pub s_of_q: Vec<usize>,
    /// Relative value function, `h(0) = 0`.
    pub bias: Vec<f64>,
    pub avg_cost: f64,
    pub eta: f64,
    pub iterations: usize,
}

pub fn default_max_iter(params: &ModelParams) -> usize {
    10 * params.states() * (params.max_tx() + 1)
}

pub fn policy_iteration(params: &ModelParams, eta: f64, mode: EvalMode) -> Result<RelaxSolution> {
    policy_iteration_with(params, eta, mode, default_max_iter(params))
}

pub fn policy_iteration_with(
    params: &ModelParams,
    eta: f64,
    mode: EvalMode,
    max_iter: usize,
) -> Result<RelaxSolution> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::BadRange(format!("eta must be a nonnegative finite number, got {eta}")));
    }
    // strictly convex start
    let mut bias: Vec<f64> = (0..params.states()).map(|q| (q * q) as f64).collect();
    let mut current: Option<Vec<usize>> = None;
    let mut gain = f64::NAN;
    for iter in 1..=max_iter {
        let (next, backed_up) = improve(params, eta, &bias);
        let mut converged = current.as_ref() == Some(&next);
        match mode {
            EvalMode::SingleBackup => {
                // a stable greedy policy is not enough while the values still move
                // (at the iteration cap a stable policy is accepted as is)
                converged &= iter == max_iter || span_change(&bias, &backed_up) <= 1e-10 * sup_norm(&backed_up).max(1.0);
                bias = backed_up;
            }
            EvalMode::ExactEval => {
                let (g, h) = evaluate_bias(params, eta, &next)?;
                gain = g;
                bias = h;
            }
        }
        if converged {
            let policy = Policy::deterministic(params, &next)?;
            let avg_cost = match mode {
                EvalMode::ExactEval => gain,
                EvalMode::SingleBackup => {
                    let z = evaluate(params, &policy)?;
                    params.arrival_rate() * z.delay + eta * z.power
                }
            };
            return Ok(RelaxSolution {
                policy,
                s_of_q: next,
                bias,
                avg_cost,
                eta,
                iterations: iter,
            });
        }
        current = Some(next);
    }
    Err(Error::NoConvergence(max_iter))
}

fn span_change(old: &[f64], new: &[f64]) -> f64 {
    let (lo, hi) = old
        .iter()
        .zip(new)
        .map(|(a, b)| b - a)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    hi - lo
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `q + eta P_s + alpha [h(q-s+A) - h(A)] + (1-alpha) [h(q-s) - h(0)]`.
fn action_value(params: &ModelParams, eta: f64, h: &[f64], q: usize, s: usize) -> f64 {
    let a = params.batch();
    let alpha = params.alpha();
    q as f64
        + eta * params.power()[s]
        + alpha * (h[q - s + a] - h[a])
        + (1.0 - alpha) * (h[q - s] - h[0])
}

/// Greedy policy with respect to `h`; ties go to the smallest action.
fn improve(params: &ModelParams, eta: f64, h: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let mut actions = Vec::with_capacity(params.states());
    let mut values = Vec::with_capacity(params.states());
    for q in 0..params.states() {
        let candidates: Vec<(usize, f64)> =
            params.actions(q).map(|s| (s, action_value(params, eta, h, q, s))).collect();
        let best = candidates.iter().map(|&(_, v)| v).fold(f64::INFINITY, f64::min);
        let tol = 1e-10 * best.abs().max(1.0);
        let &(s, v) = candidates
            .iter()
            .find(|&&(_, v)| v <= best + tol)
            .expect("every state has a feasible action");
        actions.push(s);
        values.push(v);
    }
    (actions, values)
}

/// Gain and bias of a deterministic policy: `g + h(q) = c(q) + E[h(next)]`, `h(0) = 0`.
fn evaluate_bias(params: &ModelParams, eta: f64, actions: &[usize]) -> Result<(f64, Vec<f64>)> {
    let policy = Policy::deterministic(params, actions)?;
    let cc = closed_classes(&transition_matrix(params, &policy));
    if !cc.is_unichain() {
        return Err(Error::MultiChain { classes: cc.classes });
    }
    let n = params.states();
    let a = params.batch();
    let alpha = params.alpha();
    // unknowns: [g, h(1), ..., h(Q)]
    let mut m = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for (q, &s) in actions.iter().enumerate() {
        m[(q, 0)] += 1.0;
        if q > 0 {
            m[(q, q)] += 1.0;
        }
        let up = q - s + a;
        let down = q - s;
        if up > 0 {
            m[(q, up)] -= alpha;
        }
        if down > 0 {
            m[(q, down)] -= 1.0 - alpha;
        }
        rhs[q] = q as f64 + eta * params.power()[s];
    }
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NumericalFailure("singular bias system".into()))?;
    let mut h = vec![0.0; n];
    h[1..n].copy_from_slice(&sol.as_slice()[1..n]);
    Ok((sol[0], h))
}

/// Solves the relaxation for each multiplier; results keep the input order.
pub fn sweep_eta(params: &ModelParams, etas: &[f64]) -> Result<Vec<RelaxSolution>> {
    if etas.is_empty() {
        return Err(Error::BadRange("eta list is empty".into()));
    }
    etas.par_iter()
        .map(|&eta| policy_iteration(params, eta, EvalMode::ExactEval))
        .collect()
}
