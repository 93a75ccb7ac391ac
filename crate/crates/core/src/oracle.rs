//! Brute-force reference: enumerate every deterministic feasible policy,
//! evaluate it, and take the Pareto part of the lower convex hull.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{closed_classes, perf_from_distribution, stationary, stationary_in_class, transition_matrix};
use crate::curve::{corners, same_point, Segment, TradeoffCurve, Vertex};
use crate::error::{Error, Result};
use crate::model::{approx_eq, thresholds_of, ModelParams, PerfPoint, Policy, ThresholdPolicy};

pub const DEFAULT_CAP: u128 = 1_000_000;

/// Number of deterministic feasible policies (product of per-state choice counts).
pub fn policy_count(params: &ModelParams) -> u128 {
    (0..params.states()).map(|q| params.actions(q).count() as u128).product()
}

/// Decodes a mixed-radix index into an action map; state 0 is the fastest digit.
pub fn policy_at(params: &ModelParams, mut index: u128) -> Vec<usize> {
    (0..params.states())
        .map(|q| {
            let r = params.actions(q);
            let radix = r.clone().count() as u128;
            let s = *r.start() + (index % radix) as usize;
            index /= radix;
            s
        })
        .collect()
}

pub fn enumerate_policies(params: &ModelParams) -> Result<impl Iterator<Item = Vec<usize>> + '_> {
    enumerate_policies_capped(params, DEFAULT_CAP)
}

pub fn enumerate_policies_capped(
    params: &ModelParams,
    cap: u128,
) -> Result<impl Iterator<Item = Vec<usize>> + '_> {
    let count = checked_count(params, cap)?;
    Ok((0..count).map(move |i| policy_at(params, i)))
}

fn checked_count(params: &ModelParams, cap: u128) -> Result<u128> {
    let count = policy_count(params);
    if count > cap {
        return Err(Error::CountExceeded { count, cap });
    }
    Ok(count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub point: PerfPoint,
    pub actions: Vec<usize>,
    /// Closed class the point was computed on, for multichain policies.
    pub class: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCloud {
    pub points: Vec<CloudPoint>,
    pub unichain: usize,
    pub multichain: usize,
}

impl PolicyCloud {
    /// `power,delay,policy` with the action map joined by `-`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("power,delay,policy\n");
        for c in &self.points {
            let enc: Vec<String> = c.actions.iter().map(usize::to_string).collect();
            out.push_str(&format!("{},{},{}\n", c.point.power, c.point.delay, enc.join("-")));
        }
        out
    }

    /// Class points of multichain policies that no unichain policy attains.
    pub fn unmatched_class_points(&self, params: &ModelParams) -> Vec<&CloudPoint> {
        let uni: Vec<PerfPoint> = self.points.iter().filter(|c| c.class.is_none()).map(|c| c.point).collect();
        self.points
            .iter()
            .filter(|c| c.class.is_some() && !uni.iter().any(|&u| same_point(params, u, c.point)))
            .collect()
    }
}

fn evaluate_entry(params: &ModelParams, actions: Vec<usize>) -> Result<Vec<CloudPoint>> {
    let policy = Policy::deterministic(params, &actions)?;
    let cc = closed_classes(&transition_matrix(params, &policy));
    if cc.is_unichain() {
        let ss = stationary(params, &policy)?;
        return Ok(vec![CloudPoint {
            point: perf_from_distribution(params, &policy, &ss.pi),
            actions,
            class: None,
        }]);
    }
    cc.classes
        .iter()
        .map(|class| {
            let ss = stationary_in_class(params, &policy, class)?;
            Ok(CloudPoint {
                point: perf_from_distribution(params, &policy, &ss.pi),
                actions: actions.clone(),
                class: Some(class.clone()),
            })
        })
        .collect()
}

pub fn policy_cloud(params: &ModelParams) -> Result<PolicyCloud> {
    let count = checked_count(params, DEFAULT_CAP)?;
    let per_policy: Vec<Vec<CloudPoint>> = (0..count as u64)
        .into_par_iter()
        .map(|i| evaluate_entry(params, policy_at(params, i as u128)))
        .collect::<Result<_>>()?;
    let multichain = per_policy.iter().filter(|v| v[0].class.is_some()).count();
    Ok(PolicyCloud {
        unichain: per_policy.len() - multichain,
        multichain,
        points: per_policy.into_iter().flatten().collect(),
    })
}

/// Pareto-efficient part of the lower convex hull, highest power first.
pub fn pareto_hull(params: &ModelParams, pts: &[PerfPoint]) -> Vec<PerfPoint> {
    let mut sorted = pts.to_vec();
    sorted.sort_by(|a, b| a.power.total_cmp(&b.power).then(a.delay.total_cmp(&b.delay)));
    // one point per power level, the fastest
    let mut levels: Vec<PerfPoint> = Vec::new();
    for p in sorted {
        match levels.last_mut() {
            Some(l) if params.power_eq(l.power, p.power) => {
                if p.delay < l.delay {
                    *l = p;
                }
            }
            _ => levels.push(p),
        }
    }

    let mut hull: Vec<PerfPoint> = Vec::new();
    for p in levels {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let (ux, uy) = ((b.power - a.power) / params.power_scale(), b.delay - a.delay);
            let (vx, vy) = ((p.power - a.power) / params.power_scale(), p.delay - a.delay);
            let cross = ux * vy - uy * vx;
            let scale = (ux.hypot(uy) * vx.hypot(vy)).max(f64::MIN_POSITIVE);
            if cross <= 1e-12 * scale {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    // keep the part where delay still decreases with power
    let end = hull
        .windows(2)
        .position(|w| w[1].delay >= w[0].delay || approx_eq(w[1].delay, w[0].delay, 1e-12))
        .map_or(hull.len(), |i| i + 1);
    hull.truncate(end);
    hull.reverse();
    hull
}

pub fn reference_curve(params: &ModelParams) -> Result<TradeoffCurve> {
    reference_from_cloud(params, &policy_cloud(params)?)
}

/// Hull of a cloud, with threshold-form vertex policies and segment recipes.
pub fn reference_from_cloud(params: &ModelParams, cloud: &PolicyCloud) -> Result<TradeoffCurve> {
    let all: Vec<PerfPoint> = cloud.points.iter().map(|c| c.point).collect();
    let hull = corners(params, &pareto_hull(params, &all));
    let mut vertices = Vec::with_capacity(hull.len());
    for &v in &hull {
        let mut policies: Vec<ThresholdPolicy> = Vec::new();
        for c in cloud.points.iter().filter(|c| c.class.is_none() && same_point(params, c.point, v)) {
            let policy = Policy::deterministic(params, &c.actions)?;
            if let Some(t) = thresholds_of(params, &policy) {
                if !policies.contains(&t) {
                    policies.push(t);
                }
            }
        }
        if policies.is_empty() {
            return Err(Error::NumericalFailure(format!(
                "hull vertex ({}, {}) has no threshold policy",
                v.power, v.delay
            )));
        }
        vertices.push(Vertex { point: v, policies });
    }
    let segments = vertices
        .windows(2)
        .enumerate()
        .map(|(i, w)| adjacent_pair(params, &w[0], &w[1]).ok_or(Error::NonAdjacentVertices(i, i + 1)))
        .collect::<Result<Vec<_>>>()?;
    Ok(TradeoffCurve { vertices, segments })
}

fn adjacent_pair(params: &ModelParams, upper: &Vertex, lower: &Vertex) -> Option<Segment> {
    let slope = (lower.point.delay - upper.point.delay) / (lower.point.power - upper.point.power);
    for u in &upper.policies {
        for l in &lower.policies {
            let diff: Vec<usize> = (0..u.thresholds.len())
                .filter(|&s| u.thresholds[s] != l.thresholds[s])
                .collect();
            if let [s] = diff[..] {
                if s < params.max_tx() && l.thresholds[s] == u.thresholds[s] + 1 {
                    return Some(Segment {
                        s_star: s,
                        upper: u.clone(),
                        lower: l.clone(),
                        slope,
                    });
                }
            }
        }
    }
    None
}
