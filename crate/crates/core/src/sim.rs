//! Seeded Monte Carlo simulation of the queue under a stationary policy.
//!
//! Each slot draws two uniforms from one Xoshiro256++ stream, first for the
//! action and then for the arrival, as `(next_u64 >> 11) * 2^-53`. The queue
//! then moves to `q - s + A * a`. Averages are taken after the warmup and
//! standard errors come from 100 equal batch means.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, Policy};

pub const BATCHES: usize = 100;
pub const DEFAULT_WARMUP: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub slots: u64,
    #[serde(default = "default_warmup")]
    pub warmup: u64,
    #[serde(default)]
    pub q0: usize,
}

fn default_warmup() -> u64 {
    DEFAULT_WARMUP
}

impl SimConfig {
    pub fn new(seed: u64, slots: u64) -> Self {
        SimConfig {
            seed,
            slots,
            warmup: DEFAULT_WARMUP,
            q0: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub power_mean: f64,
    pub delay_mean: f64,
    /// Infinite when fewer than two batches are available.
    pub power_se: f64,
    pub delay_se: f64,
    pub slots_used: u64,
}

/// One simulated slot, as passed to trajectory observers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub slot: u64,
    pub queue: usize,
    pub sent: usize,
    pub arrived: bool,
}

fn unit(rng: &mut Xoshiro256PlusPlus) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn sample_action(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (s, &f) in row.iter().enumerate() {
        if f > 0.0 {
            acc += f;
            last = s;
            if u < acc {
                return s;
            }
        }
    }
    // rounding left u above the cumulative sum
    last
}

fn check_config(params: &ModelParams, policy: &Policy, cfg: &SimConfig) -> Result<()> {
    if cfg.slots <= cfg.warmup {
        return Err(Error::BadSimConfig(format!(
            "slots ({}) must exceed warmup ({})",
            cfg.slots, cfg.warmup
        )));
    }
    if cfg.q0 > params.buffer() {
        return Err(Error::BadSimConfig(format!("q0={} exceeds Q={}", cfg.q0, params.buffer())));
    }
    if policy.states() != params.states() {
        return Err(Error::BadSimConfig(format!(
            "policy has {} rows, model has {} states",
            policy.states(),
            params.states()
        )));
    }
    Ok(())
}

pub fn simulate(params: &ModelParams, policy: &Policy, cfg: &SimConfig) -> Result<SimResult> {
    simulate_observed(params, policy, cfg, |_| {})
}

/// Like [`simulate`], calling `observe` for every slot including the warmup.
pub fn simulate_observed(
    params: &ModelParams,
    policy: &Policy,
    cfg: &SimConfig,
    mut observe: impl FnMut(Step),
) -> Result<SimResult> {
    check_config(params, policy, cfg)?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);
    let used = cfg.slots - cfg.warmup;
    let batches = (BATCHES as u64).min(used) as usize;
    let batch_len = used / batches as u64;
    let mut power_sums = vec![0.0; batches];
    let mut queue_sums = vec![0.0; batches];
    let a = params.batch();
    let mut q = cfg.q0;

    for slot in 0..cfg.slots {
        let s = sample_action(policy.row(q), unit(&mut rng));
        let arrived = unit(&mut rng) < params.alpha();
        if s > q {
            return Err(Error::UnderflowViolated { slot, state: q, sent: s });
        }
        let next = q - s + if arrived { a } else { 0 };
        if next > params.buffer() {
            return Err(Error::OverflowViolated { slot, state: q, next });
        }
        observe(Step {
            slot,
            queue: q,
            sent: s,
            arrived,
        });
        if slot >= cfg.warmup {
            // trailing slots past the last full batch join the final batch
            let b = (((slot - cfg.warmup) / batch_len) as usize).min(batches - 1);
            power_sums[b] += params.power()[s];
            queue_sums[b] += q as f64;
        }
        q = next;
    }

    let sizes: Vec<f64> = (0..batches)
        .map(|b| {
            if b + 1 == batches {
                (used - batch_len * (batches as u64 - 1)) as f64
            } else {
                batch_len as f64
            }
        })
        .collect();
    let rate = params.arrival_rate();
    let (power_mean, power_se) = batch_stats(&power_sums, &sizes);
    let (queue_mean, queue_se) = batch_stats(&queue_sums, &sizes);
    Ok(SimResult {
        power_mean,
        delay_mean: queue_mean / rate,
        power_se,
        delay_se: queue_se / rate,
        slots_used: used,
    })
}

/// Overall mean and the standard error of the batch means.
fn batch_stats(sums: &[f64], sizes: &[f64]) -> (f64, f64) {
    let total: f64 = sizes.iter().sum();
    let mean = sums.iter().sum::<f64>() / total;
    let k = sums.len();
    if k < 2 {
        return (mean, f64::INFINITY);
    }
    let means: Vec<f64> = sums.iter().zip(sizes).map(|(s, n)| s / n).collect();
    let avg = means.iter().sum::<f64>() / k as f64;
    let var = means.iter().map(|m| (m - avg).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

/// Independent runs for each seed, in parallel; results keep the seed order.
pub fn simulate_seeds(params: &ModelParams, policy: &Policy, cfg: &SimConfig, seeds: &[u64]) -> Result<Vec<SimResult>> {
    seeds
        .par_iter()
        .map(|&seed| simulate(params, policy, &SimConfig { seed, ..*cfg }))
        .collect()
}

/// `slot,queue,sent,arrived` rows for a debugging dump.
pub fn trajectory_csv(params: &ModelParams, policy: &Policy, cfg: &SimConfig) -> Result<(SimResult, String)> {
    let mut out = String::from("slot,queue,sent,arrived\n");
    let res = simulate_observed(params, policy, cfg, |st| {
        out.push_str(&format!("{},{},{},{}\n", st.slot, st.queue, st.sent, u8::from(st.arrived)));
    })?;
    Ok((res, out))
}
