//! Markov chain induced by a stationary policy.
//!
//! The stationary distribution solves the balance system with its last row
//! replaced by normalization: `H = [1^T; G(0..Q-1, :)]`, `c = e_0`, where
//! `G = Lambda - I` and `Lambda` is column-stochastic. It is computed by GTH
//! elimination on the recurrent class; `H` itself is factorized for the
//! single-row perturbation formulas and checked through residuals.

use nalgebra::{DMatrix, DVector, LU};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, PerfPoint, Policy};

/// Column-stochastic transition matrix: entry `(j, i)` is `Pr{next = j | current = i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    lambda: DMatrix<f64>,
}

impl TransitionMatrix {
    pub fn states(&self) -> usize {
        self.lambda.ncols()
    }

    /// Probability of moving from state `from` to state `to`.
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.lambda[(to, from)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    /// Dense CSV, one line per destination row, columns are source states.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 0..self.states() {
            let line: Vec<String> = (0..self.states()).map(|i| self.lambda[(j, i)].to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// `H = [1^T; (Lambda - I)(0..n-1, :)]`.
    pub fn replaced_balance(&self) -> DMatrix<f64> {
        let n = self.states();
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            h[(0, i)] = 1.0;
        }
        for r in 0..n - 1 {
            for i in 0..n {
                h[(r + 1, i)] = self.lambda[(r, i)] - if r == i { 1.0 } else { 0.0 };
            }
        }
        h
    }
}

pub fn transition_matrix(params: &ModelParams, policy: &Policy) -> TransitionMatrix {
    let n = params.states();
    let a = params.batch();
    let alpha = params.alpha();
    let mut lambda = DMatrix::zeros(n, n);
    for (q, row) in policy.rows().iter().enumerate() {
        for (s, &f) in row.iter().enumerate() {
            if f == 0.0 {
                continue;
            }
            lambda[(q - s, q)] += (1.0 - alpha) * f;
            lambda[(q - s + a, q)] += alpha * f;
        }
    }
    TransitionMatrix { lambda }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedClasses {
    /// Each closed class, sorted; classes ordered by smallest member.
    pub classes: Vec<Vec<usize>>,
    pub transient: Vec<usize>,
}

impl ClosedClasses {
    pub fn is_unichain(&self) -> bool {
        self.classes.len() == 1
    }

    pub fn class_of(&self, state: usize) -> Option<&[usize]> {
        self.classes.iter().find(|c| c.contains(&state)).map(Vec::as_slice)
    }
}

/// Strongly connected components of the support graph with no outgoing edge.
pub fn closed_classes(t: &TransitionMatrix) -> ClosedClasses {
    let n = t.states();
    let mut g = DiGraph::<(), ()>::with_capacity(n, 2 * n);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for j in 0..n {
            if t.prob(i, j) > 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let mut component = vec![0usize; n];
    let sccs = tarjan_scc(&g);
    for (c, members) in sccs.iter().enumerate() {
        for v in members {
            component[v.index()] = c;
        }
    }
    let mut classes = Vec::new();
    let mut transient = Vec::new();
    for members in &sccs {
        let c = component[members[0].index()];
        let closed = members.iter().all(|v| {
            let i = v.index();
            (0..n).all(|j| t.prob(i, j) == 0.0 || component[j] == c)
        });
        let mut states: Vec<usize> = members.iter().map(|v| v.index()).collect();
        states.sort_unstable();
        if closed {
            classes.push(states);
        } else {
            transient.extend(states);
        }
    }
    classes.sort_by_key(|c| c[0]);
    transient.sort_unstable();
    ClosedClasses { classes, transient }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub pi: Vec<f64>,
    /// The closed class carrying the distribution.
    pub recurrent: Vec<usize>,
}

/// Stationary distribution.
///
/// Unichains are solved through the full replaced-balance system. If several
/// closed classes exist and state 0 is recurrent, state 0's class is used;
/// otherwise `MultiChain` is returned.
pub fn stationary(params: &ModelParams, policy: &Policy) -> Result<SteadyState> {
    let t = transition_matrix(params, policy);
    let cc = closed_classes(&t);
    if cc.is_unichain() {
        return class_distribution(&t, &cc.classes[0]);
    }
    match cc.class_of(0) {
        Some(class) => class_distribution(&t, class),
        None => Err(Error::MultiChain { classes: cc.classes }),
    }
}

/// Stationary distribution restricted to one closed class of the chain.
pub fn stationary_in_class(params: &ModelParams, policy: &Policy, class: &[usize]) -> Result<SteadyState> {
    let t = transition_matrix(params, policy);
    let cc = closed_classes(&t);
    if !cc.classes.iter().any(|c| c == class) {
        return Err(Error::InvalidPolicy(format!("{class:?} is not a closed class of the chain")));
    }
    class_distribution(&t, class)
}

/// Stationary distribution on a closed class by GTH elimination.
///
/// The elimination only adds and divides positive quantities, so every
/// component keeps full relative accuracy even when the powers of nearby
/// policies agree to many digits.
fn class_distribution(t: &TransitionMatrix, class: &[usize]) -> Result<SteadyState> {
    let m = class.len();
    // row-stochastic restriction: p[a][b] = Pr{class[a] -> class[b]}
    let mut p: Vec<Vec<f64>> = class
        .iter()
        .map(|&i| class.iter().map(|&j| t.prob(i, j)).collect())
        .collect();
    for k in (1..m).rev() {
        let out: f64 = p[k][..k].iter().sum();
        if !(out > 0.0) {
            return Err(Error::NumericalFailure(format!(
                "state {} cannot reach the rest of its class",
                class[k]
            )));
        }
        for i in 0..k {
            p[i][k] /= out;
        }
        for i in 0..k {
            let w = p[i][k];
            if w != 0.0 {
                for j in 0..k {
                    p[i][j] += w * p[k][j];
                }
            }
        }
    }
    let mut local = vec![0.0; m];
    local[0] = 1.0;
    for j in 1..m {
        local[j] = (0..j).map(|i| local[i] * p[i][j]).sum();
    }
    let total: f64 = local.iter().sum();
    let mut pi = vec![0.0; t.states()];
    for (&state, v) in class.iter().zip(local) {
        pi[state] = v / total;
    }
    Ok(SteadyState {
        pi,
        recurrent: class.to_vec(),
    })
}

/// Average power and delay from a stationary distribution.
pub fn perf_from_distribution(params: &ModelParams, policy: &Policy, pi: &[f64]) -> PerfPoint {
    let p_f = policy.state_power(params);
    let power = pi.iter().zip(&p_f).map(|(a, b)| a * b).sum();
    let queue: f64 = pi.iter().enumerate().map(|(q, v)| q as f64 * v).sum();
    PerfPoint {
        power,
        delay: queue / params.arrival_rate(),
    }
}

pub fn evaluate(params: &ModelParams, policy: &Policy) -> Result<PerfPoint> {
    let ss = stationary(params, policy)?;
    Ok(perf_from_distribution(params, policy, &ss.pi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `|sum(pi) - 1|`.
    pub normalization: f64,
    /// `||H pi - c||_inf`.
    pub replaced: f64,
    /// `||(Lambda - I) pi||_inf`.
    pub balance: f64,
}

pub fn residuals(params: &ModelParams, policy: &Policy, pi: &[f64]) -> Residuals {
    let t = transition_matrix(params, policy);
    let v = DVector::from_column_slice(pi);
    let h = t.replaced_balance();
    let mut c = DVector::zeros(pi.len());
    c[0] = 1.0;
    let replaced = (&h * &v - c).amax();
    let g = t.matrix() - DMatrix::identity(pi.len(), pi.len());
    let balance = (g * &v).amax();
    Residuals {
        normalization: (pi.iter().sum::<f64>() - 1.0).abs(),
        replaced,
        balance,
    }
}

/// One LU factorization of `H_F`, reused for the single-row perturbation
/// quantities (mixing scalar and segment slope).
#[derive(Debug, Clone)]
pub struct Factorization {
    params: ModelParams,
    policy: Policy,
    transition: TransitionMatrix,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    pi: Vec<f64>,
    state_power: Vec<f64>,
    point: PerfPoint,
}

/// Effect of replacing one row of the factorized policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub state: usize,
    /// `h_q^T delta_q`.
    pub coupling: f64,
    /// `d^T H^{-1} delta_q`.
    pub queue_shift: f64,
    /// `p_F^T H^{-1} delta_q`.
    pub power_shift: f64,
    /// Change in expected power at the differing state.
    pub zeta: f64,
    pub pi_state: f64,
}

impl Factorization {
    /// Requires a unichain policy.
    pub fn new(params: &ModelParams, policy: &Policy) -> Result<Self> {
        let transition = transition_matrix(params, policy);
        let cc = closed_classes(&transition);
        if !cc.is_unichain() {
            return Err(Error::MultiChain { classes: cc.classes });
        }
        let lu = transition.replaced_balance().lu();
        if !lu.is_invertible() {
            return Err(Error::NumericalFailure("singular balance system".into()));
        }
        let pi = class_distribution(&transition, &cc.classes[0])?.pi;
        let point = perf_from_distribution(params, policy, &pi);
        Ok(Factorization {
            params: params.clone(),
            policy: policy.clone(),
            state_power: policy.state_power(params),
            transition,
            lu,
            pi,
            point,
        })
    }

    pub fn point(&self) -> PerfPoint {
        self.point
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn perturbation(&self, other: &Policy) -> Result<Perturbation> {
        let rows = self.policy.differing_rows(other);
        if rows.len() != 1 {
            return Err(Error::RowMismatch(rows.len()));
        }
        let q = rows[0];
        let n = self.params.states();
        let other_t = transition_matrix(&self.params, other);
        let mut delta = DVector::zeros(n);
        for r in 0..n - 1 {
            delta[r + 1] = other_t.prob(q, r) - self.transition.prob(q, r);
        }
        let x = self
            .lu
            .solve(&delta)
            .ok_or_else(|| Error::NumericalFailure("singular balance system".into()))?;
        let other_power: f64 = other.row(q).iter().zip(self.params.power()).map(|(f, p)| f * p).sum();
        Ok(Perturbation {
            state: q,
            coupling: x[q],
            queue_shift: x.iter().enumerate().map(|(j, v)| j as f64 * v).sum(),
            power_shift: x.iter().zip(&self.state_power).map(|(a, b)| a * b).sum(),
            zeta: other_power - self.state_power[q],
            pi_state: self.pi[q],
        })
    }

    /// `eps' = (eps + eps k) / (1 + eps k)` with `k = h_q^T delta_q`.
    pub fn mix_scalar(&self, other: &Policy, eps: f64) -> Result<f64> {
        let k = self.perturbation(other)?.coupling;
        Ok((eps + eps * k) / (1.0 + eps * k))
    }

    /// `(D' - D) / (P' - P)` from the factorization alone.
    pub fn segment_slope(&self, other: &Policy) -> Result<f64> {
        if self.policy.differing_rows(other).is_empty() {
            return Err(Error::DegenerateSegment);
        }
        let pt = self.perturbation(other)?;
        let d_power = pt.pi_state * (pt.zeta - pt.power_shift) / (1.0 + pt.coupling);
        if self.params.power_eq(self.point.power + d_power, self.point.power) {
            return Err(Error::DegenerateSegment);
        }
        Ok(pt.queue_shift / (self.params.arrival_rate() * (pt.power_shift - pt.zeta)))
    }
}

pub fn mix_scalar(params: &ModelParams, f: &Policy, fp: &Policy, eps: f64) -> Result<f64> {
    Factorization::new(params, f)?.mix_scalar(fp, eps)
}

pub fn segment_slope(params: &ModelParams, f: &Policy, fp: &Policy) -> Result<f64> {
    Factorization::new(params, f)?.segment_slope(fp)
}
