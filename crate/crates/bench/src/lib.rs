//! Fixtures shared by the benchmarks.

use dfsnet_core::{build_steering_plan, SteeringPlan};

/// Deterministic pseudo-random hop of `channels × hop` interleaved samples.
pub fn noise_hop(channels: usize, hop: usize, seed: u64) -> Vec<f64> {
    let mut state = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
    (0..channels * hop)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}

/// Steering for `channels` microphones with a spread of fractional TDOAs.
pub fn steering(channels: usize) -> SteeringPlan {
    let tdoas: Vec<f64> = (1..channels).map(|i| 1.7 * i as f64).collect();
    build_steering_plan(&tdoas, 17).expect("valid steering")
}
