#![allow(dead_code)]

use gcmr_core::planner::{self, valid_gammas, SystemParams};
use num_bigint::BigUint;

pub const GROUP_SIZES: [usize; 4] = [1, 2, 4, 8];

/// Every valid (K, L, gamma) with K <= max_k and L in {1, 2, 4, 8}.
pub fn grid(max_k: usize) -> Vec<SystemParams> {
    let mut out = Vec::new();
    for k in 1..=max_k {
        for l in GROUP_SIZES {
            if k % l != 0 {
                continue;
            }
            for gamma in valid_gammas(k, l) {
                out.push(SystemParams::new(k, l, gamma).unwrap());
            }
        }
    }
    out
}

/// Grid points whose subpacketization is small enough to move payloads.
pub fn small_points(max_k: usize, max_s: u32) -> Vec<SystemParams> {
    grid(max_k)
        .into_iter()
        .filter(|p| planner::subpacketization_of(p) <= BigUint::from(max_s))
        .collect()
}

pub fn factorial(n: usize) -> BigUint {
    (1..=n).map(BigUint::from).product()
}

/// n! / (k! (n-k)!), independent of the planner's binomial.
pub fn choose(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::from(0u32);
    }
    factorial(n) / (factorial(k) * factorial(n - k))
}
