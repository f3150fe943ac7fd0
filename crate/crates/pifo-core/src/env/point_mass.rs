//! Damped point mass on the unit square.
//!
//! State `[px, py, vx, vy]`. Acceleration commands are bounded; velocity is
//! damped and integrated first, then position (semi-implicit Euler). Reward
//! is the negative Euclidean distance to the fixed goal after the update.
//! Episodes run to the step cap; there is no terminal region.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub(crate) const DT: f64 = 0.05;
pub(crate) const DAMPING: f64 = 0.95;
pub(crate) const GOAL: [f64; 2] = [0.5, 0.5];
pub(crate) const BOUND: f64 = 1.0;

/// Position uniform in (-0.8, 0.8)^2 (x then y), velocity zero.
pub(crate) fn reset(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut draw = || 1.6 * rng.random::<f64>() - 0.8;
    vec![draw(), draw(), 0.0, 0.0]
}

pub(crate) fn step(s: &[f64], action: &[f64]) -> (Vec<f64>, f64, bool) {
    let ax = action[0].clamp(-1.0, 1.0);
    let ay = action[1].clamp(-1.0, 1.0);
    let vx = (DAMPING * s[2] + ax * DT).clamp(-1.0, 1.0);
    let vy = (DAMPING * s[3] + ay * DT).clamp(-1.0, 1.0);
    let px = (s[0] + vx * DT).clamp(-BOUND, BOUND);
    let py = (s[1] + vy * DT).clamp(-BOUND, BOUND);
    let dx = px - GOAL[0];
    let dy = py - GOAL[1];
    let reward = -libm::sqrt(dx * dx + dy * dy);
    (vec![px, py, vx, vy], reward, false)
}
