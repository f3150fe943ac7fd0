//! Cart–pole balance with a continuous force action.
//!
//! State `[x, x_dot, theta, theta_dot]`; theta is measured from vertical.
//! Dynamics follow the classic pole-on-a-cart equations integrated with
//! explicit Euler (all derivatives evaluated at the old state). Reward is +1
//! per step; the episode ends when the pole or cart leaves its band.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub(crate) const GRAVITY: f64 = 9.8;
pub(crate) const CART_MASS: f64 = 1.0;
pub(crate) const POLE_MASS: f64 = 0.1;
pub(crate) const TOTAL_MASS: f64 = CART_MASS + POLE_MASS;
pub(crate) const POLE_LENGTH: f64 = 0.5;
pub(crate) const DT: f64 = 0.02;
pub(crate) const FORCE_LIMIT: f64 = 10.0;
pub(crate) const ANGLE_LIMIT: f64 = 0.2;
pub(crate) const TRACK_LIMIT: f64 = 2.4;

/// All four state entries uniform in (-0.05, 0.05), drawn in state order.
pub(crate) fn reset(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut draw = || 0.1 * rng.random::<f64>() - 0.05;
    vec![draw(), draw(), draw(), draw()]
}

pub(crate) fn step(s: &[f64], action: f64) -> (Vec<f64>, f64, bool) {
    let f = action.clamp(-FORCE_LIMIT, FORCE_LIMIT);
    let (x, xd, th, thd) = (s[0], s[1], s[2], s[3]);
    let st = libm::sin(th);
    let ct = libm::cos(th);
    let inner = (f + POLE_MASS * POLE_LENGTH * thd * thd * st) / TOTAL_MASS;
    let thacc = (GRAVITY * st - ct * inner)
        / (POLE_LENGTH * (4.0 / 3.0 - POLE_MASS * ct * ct / TOTAL_MASS));
    let xacc = (f + POLE_MASS * POLE_LENGTH * (thd * thd * st - thacc * ct)) / TOTAL_MASS;
    let next = vec![x + DT * xd, xd + DT * xacc, th + DT * thd, thd + DT * thacc];
    let terminal = next[2].abs() > ANGLE_LIMIT || next[0].abs() > TRACK_LIMIT;
    (next, 1.0, terminal)
}
