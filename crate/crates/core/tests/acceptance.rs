//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand_core::RngCore;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use tradeoff_forge::chain::{evaluate, residuals, stationary, Factorization};
use tradeoff_forge::curve::{build_curve, min_delay, TradeoffCurve};
use tradeoff_forge::error::Error;
use tradeoff_forge::lp::{build_lp, recover_policy, solve_simplex, LpStatus};
use tradeoff_forge::model::{preset_fig4, preset_fig5, ModelParams, PerfPoint, Policy, ThresholdPolicy};
use tradeoff_forge::oracle::reference_curve;
use tradeoff_forge::relax::{policy_iteration, EvalMode};
use tradeoff_forge::sim::{simulate_seeds, SimConfig};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn q4() -> ModelParams {
    ModelParams::new(0.5, 2, 2, 4, vec![0.0, 1.0, 3.0]).unwrap()
}

/// fig4 followed by 50 random small instances.
fn hull_instances() -> Vec<ModelParams> {
    let mut rng = common::rng(2024);
    let mut v = vec![preset_fig4()];
    v.extend((0..50).map(|_| common::random_instance(&mut rng)));
    v
}

fn close(a: PerfPoint, b: PerfPoint, tol: f64) -> bool {
    (a.power - b.power).abs() <= tol && (a.delay - b.delay).abs() <= tol
}

/// Stationary-solve residual bookkeeping shared by several criteria.
#[derive(Default)]
struct ResidualLog {
    solves: usize,
    worst_replaced: f64,
    worst_norm: f64,
}

impl ResidualLog {
    fn record(&mut self, params: &ModelParams, policy: &Policy) {
        let pi = stationary(params, policy).unwrap().pi;
        let r = residuals(params, policy, &pi);
        self.solves += 1;
        self.worst_replaced = self.worst_replaced.max(r.replaced);
        self.worst_norm = self.worst_norm.max(r.normalization);
    }
}

fn hull_equivalence(log: &mut ResidualLog) -> Outcome {
    let instances = hull_instances();
    let mut worst: f64 = 0.0;
    for (i, p) in instances.iter().enumerate() {
        let built = build_curve(p).map_err(|e| e.to_string())?;
        let reference = reference_curve(p).map_err(|e| e.to_string())?;
        let b = built.corners(p);
        let r = reference.points();
        ensure!(b.len() == r.len(), "instance {i}: {} vertices vs reference {}", b.len(), r.len());
        for (x, y) in b.iter().zip(&r) {
            worst = worst.max((x.power - y.power).abs()).max((x.delay - y.delay).abs());
        }
        ensure!(worst <= 1e-9, "instance {i}: vertex error {worst:e}");
        for v in &built.vertices {
            log.record(p, &v.policies[0].to_policy(p).unwrap());
        }
    }
    Ok(format!("fig4 + 50 random instances, max vertex error {worst:.1e} (tol 1e-9)"))
}

fn hand_instance() -> Outcome {
    let p = q4();
    let c = build_curve(&p).map_err(|e| e.to_string())?;
    let expect = [(1.5, 1.0), (1.25, 1.5), (7.0 / 6.0, 2.0)];
    ensure!(c.vertices.len() == 3, "{} vertices", c.vertices.len());
    for (v, (pw, d)) in c.vertices.iter().zip(expect) {
        ensure!(
            close(v.point, PerfPoint { power: pw, delay: d }, 1e-12),
            "vertex {:?} expected ({pw}, {d})",
            v.point
        );
    }
    for w in c.vertices.windows(2) {
        let (a, b) = (&w[0].policies[0].thresholds, &w[1].policies[0].thresholds);
        let diff: Vec<usize> = (0..a.len()).filter(|&s| a[s] != b[s]).collect();
        ensure!(diff == vec![1] && b[1] == a[1] + 1, "thresholds {a:?} -> {b:?}");
    }
    Ok("vertices (1.5, 1), (1.25, 1.5), (7/6, 2); neighbours differ only in t(1)".into())
}

fn min_delay_claim() -> Outcome {
    let mut parts = Vec::new();
    for alpha in [0.3, 0.4, 0.5] {
        let p = preset_fig5(alpha).unwrap();
        let t = Instant::now();
        let c = build_curve(&p).map_err(|e| e.to_string())?;
        let secs = t.elapsed().as_secs_f64();
        ensure!((c.min_delay() - 1.0).abs() <= 1e-9, "alpha {alpha}: min delay {}", c.min_delay());
        ensure!(secs < 60.0, "alpha {alpha}: {secs:.1}s");
        parts.push(format!("alpha {alpha}: {} vertices in {secs:.2}s", c.vertices.len()));
    }
    Ok(format!("min delay 1.0 for every alpha ({})", parts.join(", ")))
}

fn eta_grid(params: &ModelParams, curve: &TradeoffCurve) -> Vec<f64> {
    let steepest = curve.segments.iter().map(|s| -s.slope).fold(0.0, f64::max);
    let top = 2.0 * params.arrival_rate() * steepest.max(1.0);
    let mut grid = vec![0.0];
    grid.extend((0..49).map(|k| top * 1e-4f64.powf(1.0 - k as f64 / 48.0)));
    grid
}

fn relaxation_consistency(log: &mut ResidualLog) -> Outcome {
    let mut checked = 0;
    for (i, p) in hull_instances().iter().enumerate() {
        let curve = build_curve(p).unwrap();
        let vertices = curve.points();
        let sols: Vec<_> = eta_grid(p, &curve)
            .into_par_iter()
            .map(|eta| policy_iteration(p, eta, EvalMode::ExactEval).map(|s| (eta, s)))
            .collect::<Result<_, _>>()
            .map_err(|e| format!("instance {i}: {e}"))?;
        for (eta, sol) in sols {
            let steps_ok = sol.s_of_q.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1);
            ensure!(steps_ok, "instance {i}, eta {eta}: s(q) = {:?}", sol.s_of_q);
            let z = evaluate(p, &sol.policy).unwrap();
            ensure!(
                vertices.iter().any(|&v| close(v, z, 1e-8)),
                "instance {i}, eta {eta}: point {z:?} is not a vertex"
            );
            log.record(p, &sol.policy);
            checked += 1;
        }
    }
    let p = q4();
    for eta in [2.1, 3.0, 4.0, 5.0, 5.9] {
        let sol = policy_iteration(&p, eta, EvalMode::ExactEval).unwrap();
        let z = evaluate(&p, &sol.policy).unwrap();
        ensure!(close(z, PerfPoint { power: 1.25, delay: 1.5 }, 1e-9), "Q=4 eta {eta}: {z:?}");
    }
    Ok(format!("{checked} relaxation solves are unit-step policies on curve vertices; Q=4 eta in (2,6) gives (1.25, 1.5)"))
}

fn lp_equivalence(log: &mut ResidualLog) -> Outcome {
    let mut instances = hull_instances();
    instances.push(q4());
    let (mut solves, mut worst_obj, mut worst_rec): (usize, f64, f64) = (0, 0.0, 0.0);
    for (i, p) in instances.iter().enumerate() {
        let curve = build_curve(p).unwrap();
        let pts = curve.points();
        let mut budgets: Vec<f64> = pts.iter().map(|z| z.power).collect();
        budgets.extend(pts.windows(2).map(|w| 0.5 * (w[0].power + w[1].power)));
        budgets.push(0.9 * curve.min_power());
        for budget in budgets {
            let sol = solve_simplex(&build_lp(p, budget).unwrap()).map_err(|e| e.to_string())?;
            solves += 1;
            match min_delay(&curve, p, budget) {
                Ok(ans) => {
                    ensure!(sol.status == LpStatus::Optimal, "instance {i}, budget {budget}: LP {:?}", sol.status);
                    let obj = sol.objective.unwrap();
                    worst_obj = worst_obj.max((obj - ans.delay).abs());
                    ensure!(worst_obj <= 1e-7, "instance {i}, budget {budget}: LP {obj} vs curve {}", ans.delay);
                    let (policy, _) = recover_policy(p, &sol).unwrap();
                    let z = evaluate(p, &policy).map_err(|e| format!("instance {i}, budget {budget}: {e}"))?;
                    worst_rec = worst_rec.max((z.delay - obj).abs());
                    ensure!(worst_rec <= 1e-8, "instance {i}, budget {budget}: recovered delay {}", z.delay);
                    ensure!(z.power <= budget + 1e-8, "instance {i}, budget {budget}: recovered power {}", z.power);
                    log.record(p, &policy);
                }
                Err(Error::InfeasibleBudget { .. }) => {
                    ensure!(sol.status == LpStatus::Infeasible, "instance {i}, budget {budget}: LP feasible, curve not");
                }
                Err(e) => return Err(e.to_string()),
            }
        }
    }
    Ok(format!(
        "{solves} LP solves, max |LP - curve| {worst_obj:.1e} (tol 1e-7), max recovery error {worst_rec:.1e} (tol 1e-8)"
    ))
}

/// Random feasible stochastic policy matrix.
fn random_policy(params: &ModelParams, rng: &mut Xoshiro256PlusPlus) -> Policy {
    let rows = (0..params.states())
        .map(|q| {
            let mut row = vec![0.0; params.max_tx() + 1];
            let acts: Vec<usize> = params.actions(q).collect();
            let support = 1 + (rng.next_u64() % acts.len() as u64) as usize;
            for &s in &acts[..support] {
                row[s] = 0.05 + common::unit(rng);
            }
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|f| *f /= total);
            row
        })
        .collect();
    Policy::new(params, rows).unwrap()
}

fn with_row(params: &ModelParams, base: &Policy, q: usize, rng: &mut Xoshiro256PlusPlus) -> Policy {
    let mut rows = base.rows().to_vec();
    rows[q] = random_policy(params, rng).row(q).to_vec();
    Policy::new(params, rows).unwrap()
}

fn mixing_suite(log: &mut ResidualLog) -> Outcome {
    let mut rng = common::rng(77);
    let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    let (mut pairs, mut worst) = (0, 0.0f64);
    while pairs < 200 {
        let p = common::random_instance(&mut rng);
        let f = random_policy(&p, &mut rng);
        let q = (rng.next_u64() % p.states() as u64) as usize;
        let fp = with_row(&p, &f, q, &mut rng);
        if f.differing_rows(&fp).len() != 1 {
            continue;
        }
        let (Ok(fac), Ok(zp)) = (Factorization::new(&p, &f), evaluate(&p, &fp)) else {
            continue;
        };
        if Factorization::new(&p, &fp).is_err() {
            continue;
        }
        pairs += 1;
        let z = fac.point();
        let mut prev = f64::NEG_INFINITY;
        for &eps in &grid {
            let e2 = fac.mix_scalar(&fp, eps).map_err(|e| e.to_string())?;
            ensure!(e2 >= prev, "pair {pairs}: eps' not monotone at eps {eps}");
            prev = e2;
            let mixed = f.mix(&fp, eps);
            let zm = evaluate(&p, &mixed).map_err(|e| e.to_string())?;
            let expect = PerfPoint {
                power: (1.0 - e2) * z.power + e2 * zp.power,
                delay: (1.0 - e2) * z.delay + e2 * zp.delay,
            };
            worst = worst.max((zm.power - expect.power).abs()).max((zm.delay - expect.delay).abs());
            ensure!(worst <= 1e-8, "pair {pairs}, eps {eps}: mixed point off the line by {worst:e}");
            log.record(&p, &mixed);
        }
        ensure!(fac.mix_scalar(&fp, 0.0).unwrap() == 0.0, "eps'(0) != 0");
        ensure!(fac.mix_scalar(&fp, 1.0).unwrap() == 1.0, "eps'(1) != 1");
    }
    Ok(format!("{pairs} random pairs, max deviation from the chord {worst:.1e} (tol 1e-8), eps' monotone with exact endpoints"))
}

fn balance_residuals(log: &ResidualLog) -> Outcome {
    ensure!(log.solves > 0, "no stationary solves recorded");
    ensure!(log.worst_replaced < 1e-9, "||H pi - c|| = {:e}", log.worst_replaced);
    ensure!(log.worst_norm <= 1e-10, "|sum pi - 1| = {:e}", log.worst_norm);
    Ok(format!(
        "{} solves, max ||H pi - c|| {:.1e} (tol 1e-9), max |sum pi - 1| {:.1e} (tol 1e-10)",
        log.solves, log.worst_replaced, log.worst_norm
    ))
}

fn simulation_validation() -> Outcome {
    let mut cases: Vec<(ModelParams, ThresholdPolicy)> = Vec::new();
    let p = q4();
    let c = build_curve(&p).unwrap();
    for v in &c.vertices {
        cases.push((p.clone(), v.policies[0].clone()));
    }
    cases.push((p.clone(), min_delay(&c, &p, 1.3).unwrap().policy));
    let f4 = preset_fig4();
    let c4 = build_curve(&f4).unwrap();
    let n4 = c4.vertices.len();
    for k in 0..6 {
        cases.push((f4.clone(), c4.vertices[k * (n4 - 1) / 5].policies[0].clone()));
    }
    ensure!(cases.len() == 10, "{} policies", cases.len());
    ensure!(cases.iter().any(|(_, t)| t.mixing.is_some()), "no mixed policy");

    let seeds: Vec<u64> = (1..=20).collect();
    let cfg = SimConfig::new(0, 1_000_000);
    let t = Instant::now();
    let mut worst_rate: f64 = 1.0;
    for (i, (params, tp)) in cases.iter().enumerate() {
        let policy = tp.to_policy(params).unwrap();
        let z = evaluate(params, &policy).unwrap();
        let runs = simulate_seeds(params, &policy, &cfg, &seeds).map_err(|e| e.to_string())?;
        let hits = runs
            .iter()
            .filter(|r| {
                (r.power_mean - z.power).abs() <= 3.0 * r.power_se && (r.delay_mean - z.delay).abs() <= 3.0 * r.delay_se
            })
            .count();
        let rate = hits as f64 / seeds.len() as f64;
        worst_rate = worst_rate.min(rate);
        ensure!(rate >= 0.95, "policy {i} {tp:?}: {hits}/20 seeds within 3 SE");
    }
    let secs = t.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1}s");
    Ok(format!("10 policies x 20 seeds x 1e6 slots, worst agreement rate {:.0}% in {secs:.1}s", 100.0 * worst_rate))
}

fn large_instance_structure() -> Outcome {
    let alphas = [0.3, 0.4, 0.5];
    let curves: Vec<(ModelParams, TradeoffCurve)> = alphas
        .iter()
        .map(|&a| {
            let p = preset_fig5(a).unwrap();
            let c = build_curve(&p).unwrap();
            (p, c)
        })
        .collect();
    for ((_, c), a) in curves.iter().zip(alphas) {
        let pts = c.points();
        let decreasing = pts.windows(2).all(|w| w[1].power < w[0].power && w[1].delay > w[0].delay);
        ensure!(decreasing, "alpha {a}: not monotone");
        let convex = c.segments.windows(2).all(|w| w[1].slope <= w[0].slope * (1.0 - 1e-9));
        ensure!(convex, "alpha {a}: slopes not steepening toward low power");
        ensure!(c.segments.iter().all(|s| s.slope < 0.0), "alpha {a}: nonnegative slope");
    }
    let lo = curves.iter().map(|(_, c)| c.min_power()).fold(0.0, f64::max);
    let hi = curves.iter().map(|(_, c)| c.max_power()).fold(f64::INFINITY, f64::min);
    ensure!(lo < hi, "no common budget range");
    let mut samples = 0;
    for k in 0..10 {
        let budget = lo + (hi - lo) * (k as f64 + 0.5) / 10.0;
        let delays: Vec<f64> = curves.iter().map(|(p, c)| min_delay(c, p, budget).unwrap().delay).collect();
        ensure!(delays[0] < delays[1] && delays[1] < delays[2], "budget {budget:e}: delays {delays:?}");
        samples += 1;
    }
    Ok(format!(
        "fig5 curves decreasing and convex for alpha 0.3/0.4/0.5; delay rises with alpha at {samples} sampled budgets"
    ))
}

fn main() {
    let mut log = ResidualLog::default();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut run = |n: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let (tag, detail) = match &out {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        println!("criterion {n} [{tag}] {name}: {detail}");
        results.push((n, name, out));
    };
    run(1, "hull equivalence", &mut || hull_equivalence(&mut log));
    run(2, "hand-derived instance", &mut hand_instance);
    run(3, "minimum delay", &mut min_delay_claim);
    run(4, "relaxation consistency", &mut || relaxation_consistency(&mut log));
    run(5, "LP equivalence", &mut || lp_equivalence(&mut log));
    run(6, "single-row mixing", &mut || mixing_suite(&mut log));
    run(7, "balance residuals", &mut || balance_residuals(&log));
    run(8, "simulation validation", &mut simulation_validation);
    run(9, "large-instance structure", &mut large_instance_structure);
    let failed = results.iter().filter(|r| r.2.is_err()).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
