mod common;

use proptest::prelude::*;
use tradeoff_forge::chain::{evaluate, residuals, stationary};
use tradeoff_forge::curve::{build_curve, min_delay};
use tradeoff_forge::lp::build_lp;
use tradeoff_forge::lp::text::{export_lp_text, parse_lp_text, rows_from_parsed};
use tradeoff_forge::model::{is_threshold_form, ModelParams, Policy};
use tradeoff_forge::relax::{policy_iteration, EvalMode};

fn instance(seed: u64) -> ModelParams {
    common::random_instance(&mut common::rng(seed))
}

fn random_policy(params: &ModelParams, seed: u64) -> Policy {
    let mut rng = common::rng(seed ^ 0x9e37_79b9_7f4a_7c15);
    let rows = (0..params.states())
        .map(|q| {
            let mut row = vec![0.0; params.max_tx() + 1];
            for s in params.actions(q) {
                row[s] = 0.01 + common::unit(&mut rng);
            }
            let total: f64 = row.iter().sum();
            row.into_iter().map(|f| f / total).collect()
        })
        .collect();
    Policy::new(params, rows).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn stationary_distribution_is_a_probability_vector(seed in any::<u64>()) {
        let p = instance(seed);
        let policy = random_policy(&p, seed);
        let pi = stationary(&p, &policy).unwrap().pi;
        prop_assert!(pi.iter().all(|&x| x >= 0.0));
        let r = residuals(&p, &policy, &pi);
        prop_assert!(r.normalization <= 1e-12);
        prop_assert!(r.replaced <= 1e-12);
    }

    #[test]
    fn curve_is_decreasing_and_convex(seed in any::<u64>()) {
        let p = instance(seed);
        let c = build_curve(&p).unwrap();
        prop_assert!((c.vertices[0].point.delay - 1.0).abs() < 1e-12);
        for w in c.vertices.windows(2) {
            prop_assert!(w[1].point.power < w[0].point.power);
            prop_assert!(w[1].point.delay > w[0].point.delay);
        }
        for w in c.segments.windows(2) {
            prop_assert!(w[1].slope <= w[0].slope * (1.0 - 1e-9));
        }
        for v in &c.vertices {
            for t in &v.policies {
                prop_assert!(is_threshold_form(&p, &t.to_policy(&p).unwrap()));
            }
        }
    }

    #[test]
    fn min_delay_is_nonincreasing_in_budget(seed in any::<u64>(), u in 0.0f64..1.0, v in 0.0f64..1.0) {
        let p = instance(seed);
        let c = build_curve(&p).unwrap();
        let span = c.max_power() - c.min_power();
        let (lo, hi) = if u < v { (u, v) } else { (v, u) };
        let a = min_delay(&c, &p, c.min_power() + lo * span).unwrap();
        let b = min_delay(&c, &p, c.min_power() + hi * span).unwrap();
        prop_assert!(b.delay <= a.delay * (1.0 + 1e-9));
        let z = evaluate(&p, &a.policy.to_policy(&p).unwrap()).unwrap();
        prop_assert!((z.delay - a.delay).abs() <= 1e-8 * a.delay.max(1.0));
        prop_assert!(z.power <= a.budget * (1.0 + 1e-9));
    }

    #[test]
    fn relaxation_policy_is_monotone_unit_step(seed in any::<u64>(), eta in 0.0f64..50.0) {
        let p = instance(seed);
        let sol = policy_iteration(&p, eta, EvalMode::ExactEval).unwrap();
        prop_assert_eq!(sol.s_of_q[0], 0);
        prop_assert!(sol.s_of_q.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
        let z = evaluate(&p, &sol.policy).unwrap();
        let cost = p.arrival_rate() * z.delay + eta * z.power;
        prop_assert!((cost - sol.avg_cost).abs() <= 1e-8 * cost.max(1.0));
    }

    #[test]
    fn single_backup_matches_exact(seed in any::<u64>(), eta in 0.0f64..50.0) {
        let p = instance(seed);
        let exact = policy_iteration(&p, eta, EvalMode::ExactEval).unwrap();
        let single = policy_iteration(&p, eta, EvalMode::SingleBackup).unwrap();
        prop_assert!((exact.avg_cost - single.avg_cost).abs() <= 1e-7 * exact.avg_cost.max(1.0));
    }

    #[test]
    fn lp_text_round_trips(seed in any::<u64>(), frac in 0.0f64..2.0) {
        let p = instance(seed);
        let budget = frac * p.power()[p.max_tx()];
        let prog = build_lp(&p, budget).unwrap();
        let parsed = parse_lp_text(&export_lp_text(&prog)).unwrap();
        prop_assert_eq!(rows_from_parsed(&prog, &parsed), prog.rows.clone());
    }
}
