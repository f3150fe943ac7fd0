//! Continuous mountain car.
//!
//! State `[position, velocity]`. The car sits in a sinusoidal valley; the
//! action is a bounded push whose cost is quadratic, with a +100 bonus for
//! reaching the goal position on the right crest.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub(crate) const MIN_POS: f64 = -1.2;
pub(crate) const MAX_POS: f64 = 0.6;
pub(crate) const MAX_SPEED: f64 = 0.07;
pub(crate) const GOAL_POS: f64 = 0.45;
pub(crate) const FORCE_SCALE: f64 = 0.0015;
pub(crate) const GRAVITY_SCALE: f64 = 0.0025;

/// Position uniform in (-0.6, -0.4), velocity zero.
pub(crate) fn reset(rng: &mut ChaCha8Rng) -> Vec<f64> {
    vec![0.2 * rng.random::<f64>() - 0.6, 0.0]
}

pub(crate) fn step(s: &[f64], action: f64) -> (Vec<f64>, f64, bool) {
    let f = action.clamp(-1.0, 1.0);
    let mut v = s[1] + FORCE_SCALE * f - GRAVITY_SCALE * libm::cos(3.0 * s[0]);
    v = v.clamp(-MAX_SPEED, MAX_SPEED);
    let p = (s[0] + v).clamp(MIN_POS, MAX_POS);
    if p <= MIN_POS && v < 0.0 {
        v = 0.0;
    }
    let done = p >= GOAL_POS;
    let mut reward = -0.1 * f * f;
    if done {
        reward += 100.0;
    }
    (vec![p, v], reward, done)
}
