#![allow(dead_code)]

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use tradeoff_forge::model::ModelParams;

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

pub fn unit(rng: &mut Xoshiro256PlusPlus) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Random instance with `Q <= 8`, `A <= S <= 3` and a strictly convex power vector.
pub fn random_instance(rng: &mut Xoshiro256PlusPlus) -> ModelParams {
    loop {
        let s = 1 + (rng.next_u64() % 3) as usize;
        let a = 1 + (rng.next_u64() % s as u64) as usize;
        let q = a + (rng.next_u64() % (9 - a as u64)) as usize;
        let alpha = 0.05 + 0.9 * unit(rng);
        let mut power = vec![0.0];
        let mut inc = 0.1 + unit(rng);
        for _ in 0..s {
            power.push(power.last().unwrap() + inc);
            inc += 0.1 + 2.0 * unit(rng);
        }
        if let Ok(p) = ModelParams::new(alpha, a, s, q, power) {
            return p;
        }
    }
}
