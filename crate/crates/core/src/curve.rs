//! Optimal delay-power tradeoff curve by vertex walking.
//!
//! The walk starts at the transmit-as-much-as-possible policy and repeatedly
//! raises a single threshold `t(s*)`, `0 < s* < A`, choosing the candidate
//! whose connecting line to the current vertex has the smallest absolute
//! slope. Candidates that land exactly on the current vertex join its policy
//! list and are probed as well.

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::chain::evaluate;
use crate::error::{Error, Result};
use crate::model::{approx_eq, deterministic_from_thresholds, mixed_from_thresholds, ModelParams, PerfPoint, ThresholdPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub point: PerfPoint,
    /// Deterministic threshold policies attaining this point.
    pub policies: Vec<ThresholdPolicy>,
}

/// Mixing recipe between two adjacent vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Index of the threshold that differs by one.
    pub s_star: usize,
    /// Policy at the higher-power endpoint.
    pub upper: ThresholdPolicy,
    /// Policy at the lower-power endpoint; `lower.t(s*) = upper.t(s*) + 1`.
    pub lower: ThresholdPolicy,
    /// `(D_lower - D_upper) / (P_lower - P_upper)`, negative.
    pub slope: f64,
}

/// Vertices ordered from highest power (lowest delay) to lowest power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffCurve {
    pub vertices: Vec<Vertex>,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeCounters {
    /// Segments emitted, one threshold increment each.
    pub iterations: usize,
    pub candidate_evaluations: usize,
    pub stationary_solves: usize,
}

pub(crate) fn same_point(params: &ModelParams, a: PerfPoint, b: PerfPoint) -> bool {
    params.power_eq(a.power, b.power) && approx_eq(a.delay, b.delay, 1e-12)
}

fn slope_floor(params: &ModelParams) -> f64 {
    1e-12 / params.power_scale()
}

/// Thresholds `t(s) = s` for `s < A` and `t(s) = Q` otherwise.
pub fn transmit_max_thresholds(params: &ModelParams) -> ThresholdPolicy {
    let t = (0..=params.max_tx())
        .map(|s| if s < params.batch() { s } else { params.buffer() })
        .collect();
    ThresholdPolicy::deterministic(t)
}

struct Candidate {
    policy: ThresholdPolicy,
    from: ThresholdPolicy,
    s_star: usize,
}

pub fn build_curve(params: &ModelParams) -> Result<TradeoffCurve> {
    build_curve_with_counters(params).map(|(c, _)| c)
}

pub fn complexity_probe(params: &ModelParams) -> Result<ProbeCounters> {
    build_curve_with_counters(params).map(|(_, n)| n)
}

pub fn build_curve_with_counters(params: &ModelParams) -> Result<(TradeoffCurve, ProbeCounters)> {
    let mut counters = ProbeCounters::default();
    let start = transmit_max_thresholds(params);
    let start_point = evaluate(params, &deterministic_from_thresholds(params, &start)?)?;
    counters.stationary_solves += 1;

    let mut vertices = vec![Vertex {
        point: start_point,
        policies: vec![start.clone()],
    }];
    let mut segments = Vec::new();
    let mut previous = vec![start];
    let mut zp = start_point;
    let slope_tol = slope_floor(params);

    loop {
        let mut queue: VecDeque<ThresholdPolicy> = previous.iter().cloned().collect();
        let mut at_vertex: HashSet<Vec<usize>> = previous.iter().map(|p| p.thresholds.clone()).collect();
        let mut probed: HashSet<Vec<usize>> = HashSet::new();
        let mut best: Vec<Candidate> = Vec::new();
        let mut best_slope = f64::INFINITY;
        let mut zc = zp;

        while let Some(f) = queue.pop_front() {
            for s_star in 1..params.batch() {
                let mut t = f.thresholds.clone();
                t[s_star] += 1;
                if t[s_star] > t[s_star + 1] || !probed.insert(t.clone()) {
                    continue;
                }
                let candidate = ThresholdPolicy::deterministic(t);
                let Ok(policy) = deterministic_from_thresholds(params, &candidate) else {
                    continue;
                };
                counters.candidate_evaluations += 1;
                counters.stationary_solves += 1;
                let z = evaluate(params, &policy)?;

                if same_point(params, z, zp) {
                    if at_vertex.insert(candidate.thresholds.clone()) {
                        vertices.last_mut().expect("nonempty").policies.push(candidate.clone());
                        queue.push_back(candidate);
                    }
                    continue;
                }
                let lower_power = z.power < zp.power && !params.power_eq(z.power, zp.power);
                let no_faster = z.delay >= zp.delay || approx_eq(z.delay, zp.delay, 1e-12);
                if !(lower_power && no_faster) {
                    continue;
                }
                let slope = (z.delay - zp.delay) / (zp.power - z.power);
                let entry = Candidate {
                    policy: candidate,
                    from: f.clone(),
                    s_star,
                };
                if !best.is_empty() && approx_eq(slope, best_slope, slope_tol) {
                    if params.power_eq(z.power, zc.power) {
                        if !best.iter().any(|c| c.policy == entry.policy) {
                            best.push(entry);
                        }
                    } else if z.power > zc.power {
                        // same line, closer to the current vertex
                        best = vec![entry];
                        best_slope = slope;
                        zc = z;
                    }
                } else if slope < best_slope {
                    best = vec![entry];
                    best_slope = slope;
                    zc = z;
                }
            }
        }

        let Some(first) = best.first() else {
            break;
        };
        counters.iterations += 1;
        segments.push(Segment {
            s_star: first.s_star,
            upper: first.from.clone(),
            lower: first.policy.clone(),
            slope: (zc.delay - zp.delay) / (zc.power - zp.power),
        });
        previous = best.into_iter().map(|c| c.policy).collect();
        vertices.push(Vertex {
            point: zc,
            policies: previous.clone(),
        });
        zp = zc;
    }

    Ok((TradeoffCurve { vertices, segments }, counters))
}

/// Answer to a power-budget query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinDelay {
    pub budget: f64,
    pub delay: f64,
    /// Power actually spent by `policy`.
    pub power: f64,
    pub policy: ThresholdPolicy,
    /// Set when the budget sits on (or above) a vertex.
    pub vertex: Option<usize>,
    /// Set when the answer mixes the two ends of a segment.
    pub segment: Option<usize>,
}

impl TradeoffCurve {
    pub fn max_power(&self) -> f64 {
        self.vertices[0].point.power
    }

    pub fn min_power(&self) -> f64 {
        self.vertices[self.vertices.len() - 1].point.power
    }

    pub fn min_delay(&self) -> f64 {
        self.vertices[0].point.delay
    }

    pub fn points(&self) -> Vec<PerfPoint> {
        self.vertices.iter().map(|v| v.point).collect()
    }

    /// Vertices with collinear interior points dropped.
    pub fn corners(&self, params: &ModelParams) -> Vec<PerfPoint> {
        corners(params, &self.points())
    }

    /// `power,delay,slope`; the slope column holds the segment leaving each vertex.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("power,delay,slope\n");
        for (i, v) in self.vertices.iter().enumerate() {
            let slope = self.segments.get(i).map(|s| s.slope.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", v.point.power, v.point.delay, slope));
        }
        out
    }
}

pub(crate) fn corners(params: &ModelParams, pts: &[PerfPoint]) -> Vec<PerfPoint> {
    let mut out: Vec<PerfPoint> = Vec::with_capacity(pts.len());
    for &p in pts {
        while out.len() >= 2 {
            let a = out[out.len() - 2];
            let b = out[out.len() - 1];
            let s1 = (b.delay - a.delay) / (b.power - a.power);
            let s2 = (p.delay - b.delay) / (p.power - b.power);
            if approx_eq(s1, s2, slope_floor(params)) {
                out.pop();
            } else {
                break;
            }
        }
        out.push(p);
    }
    out
}

/// Minimum average delay under an average power budget.
///
/// Interior budgets are met by randomizing at the single state where the two
/// adjacent vertex policies differ; the probability is found by bisection.
pub fn min_delay(curve: &TradeoffCurve, params: &ModelParams, budget: f64) -> Result<MinDelay> {
    let vertex_answer = |i: usize| {
        let v = &curve.vertices[i];
        MinDelay {
            budget,
            delay: v.point.delay,
            power: v.point.power,
            policy: v.policies[0].clone(),
            vertex: Some(i),
            segment: None,
        }
    };
    if budget >= curve.max_power() || params.power_eq(budget, curve.max_power()) {
        return Ok(vertex_answer(0));
    }
    if let Some(i) = curve.vertices.iter().position(|v| params.power_eq(budget, v.point.power)) {
        return Ok(vertex_answer(i));
    }
    if budget < curve.min_power() {
        return Err(Error::InfeasibleBudget {
            budget,
            min_power: curve.min_power(),
        });
    }
    let i = curve
        .vertices
        .windows(2)
        .position(|w| w[0].point.power > budget && budget > w[1].point.power)
        .expect("budget lies strictly inside the curve's power range");
    let (hi, lo) = (curve.vertices[i].point, curve.vertices[i + 1].point);
    let seg = &curve.segments[i];
    let delay = hi.delay + (budget - hi.power) * (lo.delay - hi.delay) / (lo.power - hi.power);

    // p = 0 reproduces the upper vertex, p = 1 the lower one; power falls with p
    let power_at = |p: f64| -> Result<f64> {
        let t = ThresholdPolicy::mixed(seg.lower.thresholds.clone(), seg.s_star, p);
        Ok(evaluate(params, &mixed_from_thresholds(params, &t)?)?.power)
    };
    let tol = 1e-10 * budget.abs();
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut p = 0.5;
    let mut power = hi.power;
    for _ in 0..200 {
        p = 0.5 * (a + b);
        power = power_at(p)?;
        if (power - budget).abs() < tol || b - a <= f64::EPSILON {
            break;
        }
        if power > budget {
            a = p;
        } else {
            b = p;
        }
    }
    Ok(MinDelay {
        budget,
        delay,
        power,
        policy: ThresholdPolicy::mixed(seg.lower.thresholds.clone(), seg.s_star, p),
        vertex: None,
        segment: Some(i),
    })
}
