//! System parameters and scheduling-policy representations.
//!
//! A policy is a row-stochastic `(Q+1) x (S+1)` matrix whose entry `(q, s)` is
//! the probability of sending `s` packets while `q` packets are buffered.
//! Threshold policies are the compact form used by the curve construction:
//! state `q` sends `s` packets when `t(s-1) < q <= t(s)`, with `t(-1) = -1`.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used for every floating-point comparison in the crate.
pub const REL_TOL: f64 = 1e-9;

/// Relative tolerance for average-power comparisons. Tighter than `REL_TOL`
/// because vertex powers near the low-power end can differ by less than 1e-9.
pub const POWER_REL_TOL: f64 = 1e-12;

/// Row sums of a policy must be within this distance of one.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// `|a - b| <= REL_TOL * max(|a|, |b|) + floor`.
pub fn approx_eq(a: f64, b: f64, floor: f64) -> bool {
    (a - b).abs() <= REL_TOL * a.abs().max(b.abs()) + floor
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    alpha: f64,
    batch: usize,
    max_tx: usize,
    buffer: usize,
    power: Vec<f64>,
}

/// Unvalidated parameters exactly as they appear in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    pub alpha: f64,
    #[serde(rename = "A")]
    pub batch: usize,
    #[serde(rename = "S")]
    pub max_tx: usize,
    #[serde(rename = "Q")]
    pub buffer: usize,
    pub power: Vec<f64>,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        validate_params(raw)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams {
            alpha: p.alpha,
            batch: p.batch,
            max_tx: p.max_tx,
            buffer: p.buffer,
            power: p.power,
        }
    }
}

pub fn validate_params(raw: RawParams) -> Result<ModelParams> {
    let RawParams {
        alpha,
        batch,
        max_tx,
        buffer,
        power,
    } = raw;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::BadRange(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if batch < 1 {
        return Err(Error::BadRange("batch size A must be at least 1".into()));
    }
    if max_tx < batch {
        return Err(Error::BadRange(format!(
            "max service S={max_tx} must be at least the batch size A={batch}"
        )));
    }
    if buffer < batch {
        return Err(Error::BadRange(format!(
            "buffer Q={buffer} must hold at least one batch A={batch}"
        )));
    }
    if power.len() != max_tx + 1 {
        return Err(Error::BadRange(format!(
            "power vector needs S+1={} entries, got {}",
            max_tx + 1,
            power.len()
        )));
    }
    if let Some(bad) = power.iter().find(|p| !p.is_finite()) {
        return Err(Error::BadRange(format!("power entries must be finite, got {bad}")));
    }
    if power[0] != 0.0 {
        return Err(Error::NonzeroBase(power[0]));
    }
    let scale = power.iter().fold(0.0f64, |m, p| m.max(p.abs()));
    let incr: Vec<f64> = power.windows(2).map(|w| w[1] - w[0]).collect();
    if incr[0] <= 0.0 {
        return Err(Error::BadRange("power must be strictly increasing".into()));
    }
    for s in 1..incr.len() {
        // strictly increasing differences, with a relative margin
        if incr[s] - incr[s - 1] <= REL_TOL * scale {
            return Err(Error::NonConvexPower {
                index: s,
                prev_index: s - 1,
                next: incr[s],
                prev: incr[s - 1],
            });
        }
    }
    Ok(ModelParams {
        alpha,
        batch,
        max_tx,
        buffer,
        power,
    })
}

impl ModelParams {
    pub fn new(alpha: f64, batch: usize, max_tx: usize, buffer: usize, power: Vec<f64>) -> Result<Self> {
        validate_params(RawParams {
            alpha,
            batch,
            max_tx,
            buffer,
            power,
        })
    }

    /// Arrival probability per slot.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Packets per arrival (`A`).
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Maximum packets sent per slot (`S`).
    pub fn max_tx(&self) -> usize {
        self.max_tx
    }

    /// Buffer capacity (`Q`).
    pub fn buffer(&self) -> usize {
        self.buffer
    }

    pub fn power(&self) -> &[f64] {
        &self.power
    }

    pub fn states(&self) -> usize {
        self.buffer + 1
    }

    /// Mean packets arriving per slot, `alpha * A`.
    pub fn arrival_rate(&self) -> f64 {
        self.alpha * self.batch as f64
    }

    /// Largest power cost; used to scale absolute tolerance floors.
    pub fn power_scale(&self) -> f64 {
        self.power[self.max_tx]
    }

    /// Absolute floor for power comparisons.
    pub fn power_floor(&self) -> f64 {
        1e-12 * self.power_scale()
    }

    /// Equality of two average powers up to `POWER_REL_TOL` and the floor.
    pub fn power_eq(&self, a: f64, b: f64) -> bool {
        (a - b).abs() <= POWER_REL_TOL * a.abs().max(b.abs()) + self.power_floor()
    }

    /// Actions that neither underflow nor overflow from state `q`.
    pub fn actions(&self, q: usize) -> RangeInclusive<usize> {
        let lo = q.saturating_sub(self.buffer - self.batch);
        let hi = q.min(self.max_tx);
        lo..=hi
    }

    pub fn is_feasible(&self, q: usize, s: usize) -> bool {
        s <= self.max_tx && s <= q && q - s <= self.buffer - self.batch
    }

    /// Returns a copy with a different arrival probability.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        ModelParams::new(alpha, self.batch, self.max_tx, self.buffer, self.power.clone())
    }
}

/// Small scenario: Q=6, A=3, S=3, alpha=0.4, P=[0,1,4,9].
pub fn preset_fig4() -> ModelParams {
    ModelParams::new(0.4, 3, 3, 6, vec![0.0, 1.0, 4.0, 9.0]).expect("fig4 preset is valid")
}

/// Adaptive M-PSK scenario: Q=100, A=3, S=3, energies in joules per slot.
pub fn preset_fig5(alpha: f64) -> Result<ModelParams> {
    ModelParams::new(alpha, 3, 3, 100, vec![0.0, 9.0e-14, 18.2e-14, 59.5e-14])
}

pub const FIG5_DEFAULT_ALPHA: f64 = 0.4;

/// Looks up a built-in preset; `alpha` overrides the preset's arrival rate.
pub fn preset(name: &str, alpha: Option<f64>) -> Result<ModelParams> {
    match name {
        "fig4" => match alpha {
            Some(a) => preset_fig4().with_alpha(a),
            None => Ok(preset_fig4()),
        },
        "fig5" => preset_fig5(alpha.unwrap_or(FIG5_DEFAULT_ALPHA)),
        other => Err(Error::BadRange(format!("unknown preset {other:?} (expected fig4 or fig5)"))),
    }
}

/// Stationary randomized policy; `rows[q][s]` is the probability of sending `s` in state `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy {
    rows: Vec<Vec<f64>>,
}

impl Policy {
    /// Validates shape, stochasticity and the overflow/underflow zero pattern.
    pub fn new(params: &ModelParams, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != params.states() {
            return Err(Error::InvalidPolicy(format!(
                "expected {} rows, got {}",
                params.states(),
                rows.len()
            )));
        }
        for (q, row) in rows.iter().enumerate() {
            if row.len() != params.max_tx() + 1 {
                return Err(Error::InvalidPolicy(format!(
                    "row {q} has {} entries, expected {}",
                    row.len(),
                    params.max_tx() + 1
                )));
            }
            let mut sum = 0.0;
            for (s, &f) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&f) {
                    return Err(Error::InvalidPolicy(format!("f[{q}][{s}] = {f} outside [0, 1]")));
                }
                if f != 0.0 && !params.is_feasible(q, s) {
                    return Err(Error::InvalidPolicy(format!(
                        "f[{q}][{s}] = {f} but sending {s} from {q} under- or overflows"
                    )));
                }
                sum += f;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidPolicy(format!("row {q} sums to {sum}")));
            }
        }
        Ok(Policy { rows })
    }

    /// Deterministic policy sending `actions[q]` packets in state `q`.
    pub fn deterministic(params: &ModelParams, actions: &[usize]) -> Result<Self> {
        if actions.len() != params.states() {
            return Err(Error::InvalidPolicy(format!(
                "expected {} actions, got {}",
                params.states(),
                actions.len()
            )));
        }
        let rows = actions
            .iter()
            .enumerate()
            .map(|(q, &s)| {
                if !params.is_feasible(q, s) {
                    return Err(Error::InvalidPolicy(format!(
                        "sending {s} from state {q} under- or overflows"
                    )));
                }
                let mut row = vec![0.0; params.max_tx() + 1];
                row[s] = 1.0;
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Policy { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, q: usize) -> &[f64] {
        &self.rows[q]
    }

    pub fn states(&self) -> usize {
        self.rows.len()
    }

    /// The action taken in each state, if every row is a unit vector.
    pub fn actions(&self) -> Option<Vec<usize>> {
        self.rows
            .iter()
            .map(|row| {
                let mut it = row.iter().enumerate().filter(|(_, &f)| f != 0.0);
                match (it.next(), it.next()) {
                    (Some((s, &1.0)), None) => Some(s),
                    _ => None,
                }
            })
            .collect()
    }

    pub fn is_deterministic(&self) -> bool {
        self.actions().is_some()
    }

    /// Expected power spent in each state.
    pub fn state_power(&self, params: &ModelParams) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().zip(params.power()).map(|(f, p)| f * p).sum())
            .collect()
    }

    /// Indices of rows where the two policies differ.
    pub fn differing_rows(&self, other: &Policy) -> Vec<usize> {
        self.rows
            .iter()
            .zip(&other.rows)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(q, _)| q)
            .collect()
    }

    /// `(1 - eps) * self + eps * other`, rowwise.
    pub fn mix(&self, other: &Policy, eps: f64) -> Policy {
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| {
                if a == b {
                    a.clone()
                } else {
                    a.iter().zip(b).map(|(x, y)| (1.0 - eps) * x + eps * y).collect()
                }
            })
            .collect();
        Policy { rows }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mixing {
    pub s_star: usize,
    /// Probability of sending `s_star` (rather than `s_star + 1`) at state `t(s_star)`.
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub thresholds: Vec<usize>,
    #[serde(default)]
    pub mixing: Option<Mixing>,
}

impl ThresholdPolicy {
    pub fn deterministic(thresholds: Vec<usize>) -> Self {
        ThresholdPolicy {
            thresholds,
            mixing: None,
        }
    }

    pub fn mixed(thresholds: Vec<usize>, s_star: usize, p: f64) -> Self {
        ThresholdPolicy {
            thresholds,
            mixing: Some(Mixing { s_star, p }),
        }
    }

    /// Expands to a full policy matrix, mixed or deterministic.
    pub fn to_policy(&self, params: &ModelParams) -> Result<Policy> {
        match self.mixing {
            None => deterministic_from_thresholds(params, self),
            Some(_) => mixed_from_thresholds(params, self),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfPoint {
    /// Average energy per slot.
    pub power: f64,
    /// Average slots spent in the buffer per packet.
    pub delay: f64,
}

fn actions_from_thresholds(params: &ModelParams, t: &[usize]) -> Result<Vec<usize>> {
    if t.len() != params.max_tx() + 1 {
        return Err(Error::InfeasibleThresholds(format!(
            "expected {} thresholds, got {}",
            params.max_tx() + 1,
            t.len()
        )));
    }
    if t.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InfeasibleThresholds(format!("thresholds {t:?} are not nondecreasing")));
    }
    if let Some(&last) = t.last() {
        if last > params.buffer() {
            return Err(Error::InfeasibleThresholds(format!(
                "threshold {last} exceeds the buffer size {}",
                params.buffer()
            )));
        }
    }
    (0..params.states())
        .map(|q| {
            let s = t.iter().position(|&th| q <= th).ok_or_else(|| {
                Error::InfeasibleThresholds(format!("state {q} lies above every threshold in {t:?}"))
            })?;
            if !params.is_feasible(q, s) {
                return Err(Error::InfeasibleThresholds(format!(
                    "thresholds {t:?} send {s} from state {q}, violating 0 <= q-s <= Q-A"
                )));
            }
            Ok(s)
        })
        .collect()
}

/// Deterministic policy: state `q` sends `s` where `t(s-1) < q <= t(s)`.
pub fn deterministic_from_thresholds(params: &ModelParams, t: &ThresholdPolicy) -> Result<Policy> {
    let actions = actions_from_thresholds(params, &t.thresholds)?;
    Policy::deterministic(params, &actions)
}

/// Threshold policy with one randomized state: row `t(s*)` sends `s*` with
/// probability `p` and `s* + 1` otherwise.
pub fn mixed_from_thresholds(params: &ModelParams, t: &ThresholdPolicy) -> Result<Policy> {
    let Some(Mixing { s_star, p }) = t.mixing else {
        return deterministic_from_thresholds(params, t);
    };
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InfeasibleThresholds(format!("mixing probability {p} outside [0, 1]")));
    }
    if s_star >= params.max_tx() {
        return Err(Error::InfeasibleThresholds(format!(
            "mixing index {s_star} must be below S={}",
            params.max_tx()
        )));
    }
    let actions = actions_from_thresholds(params, &t.thresholds)?;
    let q = t.thresholds[s_star];
    for (s, w) in [(s_star, p), (s_star + 1, 1.0 - p)] {
        if w > 0.0 && !params.is_feasible(q, s) {
            return Err(Error::InfeasibleThresholds(format!(
                "mixing at state {q} would send {s}, violating 0 <= q-s <= Q-A"
            )));
        }
    }
    let mut rows: Vec<Vec<f64>> = actions
        .iter()
        .map(|&s| {
            let mut row = vec![0.0; params.max_tx() + 1];
            row[s] = 1.0;
            row
        })
        .collect();
    let row = &mut rows[q];
    row.iter_mut().for_each(|f| *f = 0.0);
    row[s_star] = p;
    row[s_star + 1] = 1.0 - p;
    Ok(Policy { rows })
}

/// Smallest thresholds consistent with the support of `policy`, if any exist.
///
/// Each action's support must fit in `[t(s-1), t(s)]`; choosing every `t(s)`
/// as small as possible is optimal for the lower-bound checks.
pub fn threshold_explanation(params: &ModelParams, policy: &Policy) -> Option<Vec<usize>> {
    let n_act = params.max_tx() + 1;
    let mut lo = vec![usize::MAX; n_act];
    let mut hi: Vec<Option<usize>> = vec![None; n_act];
    for (q, row) in policy.rows().iter().enumerate() {
        for (s, &f) in row.iter().enumerate() {
            if f > 0.0 {
                lo[s] = lo[s].min(q);
                hi[s] = Some(q);
            }
        }
    }
    let mut t = Vec::with_capacity(n_act);
    let mut prev: Option<usize> = None;
    for s in 0..n_act {
        if let Some(p) = prev {
            if lo[s] != usize::MAX && lo[s] < p {
                return None;
            }
        }
        let floor = prev.unwrap_or(0);
        let th = hi[s].map_or(floor, |h| h.max(floor));
        t.push(th);
        prev = Some(th);
    }
    Some(t)
}

pub fn is_threshold_form(params: &ModelParams, policy: &Policy) -> bool {
    threshold_explanation(params, policy).is_some()
}

/// Canonical (smallest) thresholds of a deterministic threshold-form policy.
pub fn thresholds_of(params: &ModelParams, policy: &Policy) -> Option<ThresholdPolicy> {
    if !policy.is_deterministic() {
        return None;
    }
    let mut t = threshold_explanation(params, policy)?;
    // every state must be covered, so the last threshold is Q
    if let Some(last) = t.last_mut() {
        *last = params.buffer();
    }
    Some(ThresholdPolicy::deterministic(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q4() -> ModelParams {
        ModelParams::new(0.5, 2, 2, 4, vec![0.0, 1.0, 3.0]).unwrap()
    }

    #[test]
    fn validates_presets_and_smallest_instance() {
        let p = ModelParams::new(0.4, 3, 3, 6, vec![0.0, 1.0, 4.0, 9.0]).unwrap();
        assert_eq!(p, preset_fig4());
        ModelParams::new(0.5, 1, 1, 1, vec![0.0, 1.0]).unwrap();
        for a in [0.3, 0.4, 0.5] {
            preset_fig5(a).unwrap();
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(matches!(
            ModelParams::new(0.4, 2, 2, 4, vec![0.0, 1.0, 2.0]),
            Err(Error::NonConvexPower { .. })
        ));
        assert!(matches!(ModelParams::new(0.0, 1, 1, 1, vec![0.0, 1.0]), Err(Error::BadRange(_))));
        assert!(matches!(ModelParams::new(1.0, 1, 1, 1, vec![0.0, 1.0]), Err(Error::BadRange(_))));
        assert!(matches!(ModelParams::new(0.5, 3, 2, 4, vec![0.0, 1.0, 3.0]), Err(Error::BadRange(_))));
        assert!(matches!(ModelParams::new(0.5, 3, 3, 2, vec![0.0, 1.0, 3.0, 6.0]), Err(Error::BadRange(_))));
        assert!(matches!(ModelParams::new(0.5, 1, 1, 1, vec![0.5, 1.0]), Err(Error::NonzeroBase(_))));
        assert!(matches!(ModelParams::new(0.5, 1, 2, 2, vec![0.0, -1.0, 1.0]), Err(Error::BadRange(_))));
    }

    #[test]
    fn params_json_round_trip_and_validation() {
        let json = r#"{"alpha":0.4,"A":3,"S":3,"Q":6,"power":[0,1,4,9]}"#;
        let p: ModelParams = serde_json::from_str(json).unwrap();
        assert_eq!(p, preset_fig4());
        let back = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<ModelParams>(&back).unwrap(), p);
        let bad = r#"{"alpha":0.4,"A":2,"S":2,"Q":4,"power":[0,1,2]}"#;
        assert!(serde_json::from_str::<ModelParams>(bad).is_err());
    }

    #[test]
    fn deterministic_thresholds_examples() {
        let p = q4();
        let f = deterministic_from_thresholds(&p, &ThresholdPolicy::deterministic(vec![0, 3, 4])).unwrap();
        assert_eq!(f.actions().unwrap(), vec![0, 1, 1, 1, 2]);

        let fig4 = preset_fig4();
        let f = deterministic_from_thresholds(&fig4, &ThresholdPolicy::deterministic(vec![0, 1, 2, 6])).unwrap();
        let acts = f.actions().unwrap();
        assert_eq!(acts, vec![0, 1, 2, 3, 3, 3, 3]);
        for (q, &s) in acts.iter().enumerate() {
            assert!(q >= s && q - s <= fig4.buffer() - fig4.batch());
        }

        let f = deterministic_from_thresholds(&p, &ThresholdPolicy::deterministic(vec![1, 3, 4])).unwrap();
        assert_eq!(f.actions().unwrap(), vec![0, 0, 1, 1, 2]);
        assert!(matches!(
            deterministic_from_thresholds(&p, &ThresholdPolicy::deterministic(vec![0, 1, 1])),
            Err(Error::InfeasibleThresholds(_))
        ));
        // state 4 sending 1 leaves 3 > Q-A
        assert!(matches!(
            deterministic_from_thresholds(&p, &ThresholdPolicy::deterministic(vec![0, 4, 4])),
            Err(Error::InfeasibleThresholds(_))
        ));
        assert!(matches!(
            deterministic_from_thresholds(&p, &ThresholdPolicy::deterministic(vec![2, 1, 4])),
            Err(Error::InfeasibleThresholds(_))
        ));
    }

    #[test]
    fn mixed_thresholds_examples() {
        let p = q4();
        let t = vec![0, 3, 4];
        let det = deterministic_from_thresholds(&p, &ThresholdPolicy::deterministic(t.clone())).unwrap();
        let one = mixed_from_thresholds(&p, &ThresholdPolicy::mixed(t.clone(), 1, 1.0)).unwrap();
        assert_eq!(one, det);
        let zero = mixed_from_thresholds(&p, &ThresholdPolicy::mixed(t.clone(), 1, 0.0)).unwrap();
        let dec = deterministic_from_thresholds(&p, &ThresholdPolicy::deterministic(vec![0, 2, 4])).unwrap();
        assert_eq!(zero, dec);
        let half = mixed_from_thresholds(&p, &ThresholdPolicy::mixed(t, 1, 0.5)).unwrap();
        assert_eq!(half.row(3), &[0.0, 0.5, 0.5]);
        assert!(is_threshold_form(&p, &half));
        let fractional = half.rows().iter().flatten().filter(|&&f| f > 0.0 && f < 1.0).count();
        assert_eq!(fractional, 2);
    }

    #[test]
    fn threshold_form_detection() {
        let p = q4();
        let bad = Policy::deterministic(&p, &[0, 1, 0, 1, 2]).unwrap();
        assert!(!is_threshold_form(&p, &bad));
        let good = Policy::deterministic(&p, &[0, 1, 1, 2, 2]).unwrap();
        assert!(is_threshold_form(&p, &good));
        assert_eq!(thresholds_of(&p, &good).unwrap().thresholds, vec![0, 2, 4]);
    }

    #[test]
    fn policy_rejects_overflow_entries() {
        let p = q4();
        assert!(Policy::deterministic(&p, &[0, 1, 1, 1, 1]).is_err());
        let rows = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.5, 0.5, 0.0],
            vec![0.0, 0.6, 0.3],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        assert!(matches!(Policy::new(&p, rows), Err(Error::InvalidPolicy(_))));
    }

    #[test]
    fn feasible_action_ranges() {
        let p = preset_fig4();
        let counts: Vec<usize> = (0..p.states()).map(|q| p.actions(q).count()).collect();
        assert_eq!(counts, vec![1, 2, 3, 4, 3, 2, 1]);
    }
}
