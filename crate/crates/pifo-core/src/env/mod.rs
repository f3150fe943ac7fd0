//! The three benchmark environments.
//!
//! Each environment exposes fully pinned dynamics (explicit Euler, all
//! constants fixed), a seeded reset, and a deterministic binary renderer.
//! Episodes advance purely functionally: [`step`] maps a state and an action
//! to the next state, so trajectories replay exactly from a seed.

use alloc::format;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::rng::stream_rng;
use crate::{CoreError, Result};

mod cartpole;
mod mountain_car;
mod point_mass;
pub mod render;

pub use render::Frame;

/// Identifier of one of the three tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvId {
    CartpoleBalance,
    MountainCar,
    PointMass,
}

impl EnvId {
    pub const ALL: [EnvId; 3] = [EnvId::CartpoleBalance, EnvId::MountainCar, EnvId::PointMass];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::CartpoleBalance => "cartpole-balance",
            EnvId::MountainCar => "mountain-car",
            EnvId::PointMass => "point-mass",
        }
    }

    pub fn parse(s: &str) -> Result<EnvId> {
        EnvId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| CoreError::Config(format!("unknown environment id {s:?}")))
    }
}

impl core::fmt::Display for EnvId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Static description of an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub id: EnvId,
    pub proprio_dim: usize,
    pub action_dim: usize,
    /// Per-dimension action bounds (identical across dimensions).
    pub action_low: f64,
    pub action_high: f64,
    pub max_steps: usize,
}

pub fn spec_for(id: EnvId) -> EnvSpec {
    match id {
        EnvId::CartpoleBalance => EnvSpec {
            id,
            proprio_dim: 4,
            action_dim: 1,
            action_low: -10.0,
            action_high: 10.0,
            max_steps: 200,
        },
        EnvId::MountainCar => EnvSpec {
            id,
            proprio_dim: 2,
            action_dim: 1,
            action_low: -1.0,
            action_high: 1.0,
            max_steps: 300,
        },
        EnvId::PointMass => EnvSpec {
            id,
            proprio_dim: 4,
            action_dim: 2,
            action_low: -1.0,
            action_high: 1.0,
            max_steps: 150,
        },
    }
}

/// A point in an episode: proprioceptive state, step counter, terminal flag.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub s: Vec<f64>,
    pub steps: usize,
    pub done: bool,
}

/// Outcome of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: EnvState,
    pub reward: f64,
    pub done: bool,
}

/// A fresh episode drawn from the stream seeded directly with `seed`.
pub fn reset(spec: &EnvSpec, seed: u64) -> EnvState {
    reset_with_rng(spec, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// A fresh episode drawn from an existing stream.
pub fn reset_with_rng(spec: &EnvSpec, rng: &mut ChaCha8Rng) -> EnvState {
    let s = match spec.id {
        EnvId::CartpoleBalance => cartpole::reset(rng),
        EnvId::MountainCar => mountain_car::reset(rng),
        EnvId::PointMass => point_mass::reset(rng),
    };
    EnvState {
        s,
        steps: 0,
        done: false,
    }
}

/// Advances one step. Actions are clamped to the spec bounds inside the
/// dynamics; stepping a finished episode is a usage error.
pub fn step(spec: &EnvSpec, state: &EnvState, action: &[f64]) -> Result<StepResult> {
    if state.done {
        return Err(CoreError::Usage("step called on a finished episode"));
    }
    if action.len() != spec.action_dim {
        return Err(CoreError::Shape {
            op: "env_step",
            lhs: alloc::vec![action.len()],
            rhs: alloc::vec![spec.action_dim],
        });
    }
    if state.s.len() != spec.proprio_dim {
        return Err(CoreError::Shape {
            op: "env_step",
            lhs: alloc::vec![state.s.len()],
            rhs: alloc::vec![spec.proprio_dim],
        });
    }
    let (s, reward, terminal) = match spec.id {
        EnvId::CartpoleBalance => cartpole::step(&state.s, action[0]),
        EnvId::MountainCar => mountain_car::step(&state.s, action[0]),
        EnvId::PointMass => point_mass::step(&state.s, action),
    };
    let steps = state.steps + 1;
    let done = terminal || steps >= spec.max_steps;
    Ok(StepResult {
        state: EnvState { s, steps, done },
        reward,
        done,
    })
}

/// Renders a proprioceptive state to a binary frame.
pub fn render(id: EnvId, s: &[f64]) -> Frame {
    match id {
        EnvId::CartpoleBalance => render::render_cartpole(s),
        EnvId::MountainCar => render::render_mountain_car(s),
        EnvId::PointMass => render::render_point_mass(s),
    }
}

/// An environment plus its own random stream, used for rollout collection.
///
/// Instance `i` of a run draws from the stream `seed ^ i`, so ensembles of
/// any size replay deterministically and independently.
#[derive(Debug, Clone)]
pub struct EnvInstance {
    spec: EnvSpec,
    state: EnvState,
    rng: ChaCha8Rng,
}

impl EnvInstance {
    pub fn new(id: EnvId, seed: u64, instance: u64) -> EnvInstance {
        let spec = spec_for(id);
        let mut rng = stream_rng(seed, instance);
        let state = reset_with_rng(&spec, &mut rng);
        EnvInstance { spec, state, rng }
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    /// Begins a new episode using the instance stream.
    pub fn reset(&mut self) -> &EnvState {
        self.state = reset_with_rng(&self.spec, &mut self.rng);
        &self.state
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let r = step(&self.spec, &self.state, action)?;
        self.state = r.state.clone();
        Ok(r)
    }

    pub fn render(&self) -> Frame {
        render(self.spec.id, &self.state.s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_are_pinned() {
        let cp = spec_for(EnvId::CartpoleBalance);
        assert_eq!((cp.proprio_dim, cp.action_dim, cp.max_steps), (4, 1, 200));
        assert_eq!((cp.action_low, cp.action_high), (-10.0, 10.0));
        let mc = spec_for(EnvId::MountainCar);
        assert_eq!((mc.proprio_dim, mc.action_dim, mc.max_steps), (2, 1, 300));
        let pm = spec_for(EnvId::PointMass);
        assert_eq!((pm.proprio_dim, pm.action_dim, pm.max_steps), (4, 2, 150));
    }

    #[test]
    fn id_round_trips_through_parse() {
        for id in EnvId::ALL {
            assert_eq!(EnvId::parse(id.as_str()).unwrap(), id);
        }
        assert!(matches!(EnvId::parse("acrobot"), Err(CoreError::Config(_))));
    }

    #[test]
    fn reset_is_deterministic_in_seed_and_in_range() {
        for id in EnvId::ALL {
            let spec = spec_for(id);
            let a = reset(&spec, 123);
            let b = reset(&spec, 123);
            let c = reset(&spec, 124);
            assert_eq!(a, b);
            assert_ne!(a.s, c.s);
            assert_eq!(a.s.len(), spec.proprio_dim);
            assert_eq!(a.steps, 0);
            assert!(!a.done);
        }
    }

    #[test]
    fn cartpole_reset_bounds() {
        let spec = spec_for(EnvId::CartpoleBalance);
        for seed in 0..50 {
            let st = reset(&spec, seed);
            assert!(st.s.iter().all(|v| v.abs() < 0.05));
        }
    }

    #[test]
    fn mountain_car_reset_bounds() {
        let spec = spec_for(EnvId::MountainCar);
        for seed in 0..50 {
            let st = reset(&spec, seed);
            assert!(st.s[0] >= -0.6 && st.s[0] < -0.4, "position {}", st.s[0]);
            assert_eq!(st.s[1], 0.0);
        }
    }

    #[test]
    fn point_mass_reset_bounds() {
        let spec = spec_for(EnvId::PointMass);
        for seed in 0..50 {
            let st = reset(&spec, seed);
            assert!(st.s[0].abs() < 0.8 && st.s[1].abs() < 0.8);
            assert_eq!(&st.s[2..], &[0.0, 0.0]);
        }
    }

    #[test]
    fn step_after_done_is_a_usage_error() {
        let spec = spec_for(EnvId::PointMass);
        let mut st = reset(&spec, 7);
        for _ in 0..spec.max_steps {
            assert!(!st.done);
            st = step(&spec, &st, &[0.0, 0.0]).unwrap().state;
        }
        assert!(st.done);
        assert_eq!(st.steps, 150);
        assert!(matches!(
            step(&spec, &st, &[0.0, 0.0]),
            Err(CoreError::Usage(_))
        ));
    }

    #[test]
    fn step_validates_action_length() {
        let spec = spec_for(EnvId::PointMass);
        let st = reset(&spec, 7);
        assert!(matches!(
            step(&spec, &st, &[0.0]),
            Err(CoreError::Shape { op: "env_step", .. })
        ));
    }

    #[test]
    fn instance_streams_differ_by_index_and_replay() {
        let a = EnvInstance::new(EnvId::CartpoleBalance, 5, 0);
        let b = EnvInstance::new(EnvId::CartpoleBalance, 5, 1);
        let a2 = EnvInstance::new(EnvId::CartpoleBalance, 5, 0);
        assert_ne!(a.state().s, b.state().s);
        assert_eq!(a.state().s, a2.state().s);
        // seed ^ instance: instance 1 of seed 4 equals instance 0 of seed 5.
        let c = EnvInstance::new(EnvId::CartpoleBalance, 4, 1);
        assert_eq!(a.state().s, c.state().s);
    }
}
