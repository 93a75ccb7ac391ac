//! Occupation-measure linear program for the power-constrained delay problem.
//!
//! Variables are `x[q][s] = pi(q) f(q, s)` over the feasible pairs. Balance is
//! imposed as flow conservation across each cut between states `q-1` and `q`.

pub mod simplex;
pub mod text;

use serde::{Deserialize, Serialize};

use crate::chain::SteadyState;
use crate::error::{Error, Result};
use crate::model::{ModelParams, Policy};
use simplex::{Constraint, Outcome, Sense};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpRow {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub equality: bool,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProgram {
    /// `(q, s)` of each variable, in column order.
    pub vars: Vec<(usize, usize)>,
    pub objective: Vec<f64>,
    /// Power row first, then balance rows for `q = 1..=Q`, then normalization.
    pub rows: Vec<LpRow>,
    /// Infeasible pairs whose mass is fixed to zero.
    pub fixed_zero: Vec<(usize, usize)>,
}

impl LpProgram {
    pub fn var_index(&self, q: usize, s: usize) -> Option<usize> {
        self.vars.iter().position(|&v| v == (q, s))
    }

    pub fn var_name(&self, j: usize) -> String {
        let (q, s) = self.vars[j];
        format!("x_{q}_{s}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Average delay; present when optimal.
    pub objective: Option<f64>,
    pub vars: Vec<(usize, usize)>,
    /// Empty unless optimal.
    pub x: Vec<f64>,
}

pub fn build_lp(params: &ModelParams, budget: f64) -> Result<LpProgram> {
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(Error::BadRange(format!("power budget must be nonnegative and finite, got {budget}")));
    }
    let (q_max, a, s_max) = (params.buffer(), params.batch(), params.max_tx());
    let alpha = params.alpha();
    let mut vars = Vec::new();
    let mut fixed_zero = Vec::new();
    for q in 0..=q_max {
        for s in 0..=s_max {
            if params.is_feasible(q, s) {
                vars.push((q, s));
            } else {
                fixed_zero.push((q, s));
            }
        }
    }
    let index = |q: usize, s: usize| vars.iter().position(|&v| v == (q, s));
    let objective = vars.iter().map(|&(q, _)| q as f64 / params.arrival_rate()).collect();

    let mut rows = Vec::with_capacity(q_max + 2);
    rows.push(LpRow {
        name: "power".into(),
        terms: vars.iter().enumerate().map(|(j, &(_, s))| (j, params.power()[s])).filter(|t| t.1 != 0.0).collect(),
        equality: false,
        rhs: budget,
    });
    for q in 1..=q_max {
        let mut terms = Vec::new();
        // upward crossings from l < q
        for l in q.saturating_sub(a)..q {
            for s in 0..=(l + a - q) {
                if let Some(j) = index(l, s) {
                    terms.push((j, alpha));
                }
            }
        }
        // downward crossings from r >= q
        for r in q..=(q + s_max - 1).min(q_max) {
            for s in (r - q + 1)..=s_max {
                if let Some(j) = index(r, s) {
                    let w = if s > r - q + a { 1.0 } else { 1.0 - alpha };
                    terms.push((j, -w));
                }
            }
        }
        rows.push(LpRow {
            name: format!("balance_{q}"),
            terms,
            equality: true,
            rhs: 0.0,
        });
    }
    rows.push(LpRow {
        name: "norm".into(),
        terms: (0..vars.len()).map(|j| (j, 1.0)).collect(),
        equality: true,
        rhs: 1.0,
    });
    Ok(LpProgram {
        vars,
        objective,
        rows,
        fixed_zero,
    })
}

pub fn solve_simplex(prog: &LpProgram) -> Result<LpSolution> {
    let constraints: Vec<Constraint> = prog
        .rows
        .iter()
        .map(|r| Constraint {
            terms: r.terms.clone(),
            sense: if r.equality { Sense::Eq } else { Sense::Le },
            rhs: r.rhs,
        })
        .collect();
    let (status, objective, x) = match simplex::solve(prog.vars.len(), &prog.objective, &constraints)? {
        Outcome::Optimal { x, objective } => (LpStatus::Optimal, Some(objective), x),
        Outcome::Infeasible => (LpStatus::Infeasible, None, Vec::new()),
        Outcome::Unbounded => (LpStatus::Unbounded, None, Vec::new()),
    };
    Ok(LpSolution {
        status,
        objective,
        vars: prog.vars.clone(),
        x,
    })
}

/// Builds and solves in one step; `InfeasibleBudget` when no policy meets the budget.
pub fn lp_min_delay(params: &ModelParams, budget: f64) -> Result<LpSolution> {
    let sol = solve_simplex(&build_lp(params, budget)?)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol),
        LpStatus::Infeasible => Err(Error::InfeasibleBudget {
            budget,
            min_power: f64::NAN,
        }),
        LpStatus::Unbounded => Err(Error::NumericalFailure("delay program reported unbounded".into())),
    }
}

/// Mass below this is treated as an unvisited state.
const MASS_FLOOR: f64 = 1e-12;

/// `pi(q) = sum_s x[q][s]`, `f(q, s) = x[q][s] / pi(q)`; unvisited states send `min(q, S)`.
pub fn recover_policy(params: &ModelParams, sol: &LpSolution) -> Result<(Policy, SteadyState)> {
    if sol.status != LpStatus::Optimal {
        return Err(Error::InvalidPolicy(format!("cannot recover a policy from a {:?} program", sol.status)));
    }
    let n = params.states();
    let mut mass = vec![vec![0.0; params.max_tx() + 1]; n];
    for (&(q, s), &v) in sol.vars.iter().zip(&sol.x) {
        mass[q][s] = v.max(0.0);
    }
    let mut pi = vec![0.0; n];
    let mut rows = Vec::with_capacity(n);
    for (q, m) in mass.into_iter().enumerate() {
        let total: f64 = m.iter().sum();
        if total > MASS_FLOOR {
            pi[q] = total;
            rows.push(m.into_iter().map(|v| v / total).collect());
        } else {
            let mut row = vec![0.0; params.max_tx() + 1];
            row[q.min(params.max_tx())] = 1.0;
            rows.push(row);
        }
    }
    let sum: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= sum);
    let recurrent = (0..n).filter(|&q| pi[q] > 0.0).collect();
    Ok((Policy::new(params, rows)?, SteadyState { pi, recurrent }))
}

/// Occupation measure of a policy with stationary distribution `pi`.
pub fn occupation(prog: &LpProgram, policy: &Policy, pi: &[f64]) -> Vec<f64> {
    prog.vars.iter().map(|&(q, s)| pi[q] * policy.row(q)[s]).collect()
}
