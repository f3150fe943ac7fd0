//! PPO training loop pieces: configuration, rollout collection, generalized
//! advantage estimation, and the clipped-surrogate update.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::adam::{adam_step, AdamState};
use crate::disc::{build_causal_stack, build_stacks, reward_from_d, Discriminator, FrameStack};
use crate::env::render::Frame;
use crate::env::{render, EnvId, EnvInstance};
use crate::gfmt::format_g17;
use crate::graph::Graph;
use crate::policy::{log_prob_given, sample_given, GaussianPolicy, Mode, Obs, ValueNet};
use crate::rng::{stream, stream_rng};
use crate::tensor::Tensor;
use crate::{CoreError, Result};

// ───────────────────────── configuration ─────────────────────────

/// Every hyperparameter of a training run. Serialized as flat `key=value`
/// lines with the field names below; floats use full-precision `%.17g` text
/// so a written config reproduces the exact run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Discount, in (0, 1].
    pub gamma: f64,
    /// GAE mixing factor, in [0, 1].
    pub gae_lambda: f64,
    /// PPO clip width epsilon, > 0.
    pub clip_ratio: f64,
    /// Entropy bonus weight, >= 0.
    pub entropy_coef: f64,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub disc_lr: f64,
    /// Environment steps collected per iteration (across all instances).
    pub rollout_steps: usize,
    /// PPO minibatch size.
    pub minibatch: usize,
    /// Passes over the rollout per PPO update; 0 = diagnostics only.
    pub ppo_epochs: usize,
    /// Passes per discriminator update; 0 freezes the discriminator.
    pub disc_epochs: usize,
    /// Discriminator minibatch size per source (imitator and expert).
    pub disc_batch: usize,
    /// Training iterations.
    pub iterations: usize,
    /// Evaluate the normalized score every this many iterations.
    pub eval_every: usize,
    /// Episodes per evaluation.
    pub eval_episodes: usize,
    /// Parallel environment instances (affects batch content, not just
    /// speed; instance i draws from the `seed ^ i` stream).
    pub env_instances: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_ratio: 0.2,
            entropy_coef: 0.01,
            policy_lr: 3e-4,
            value_lr: 3e-4,
            disc_lr: 1e-4,
            rollout_steps: 2048,
            minibatch: 64,
            ppo_epochs: 10,
            disc_epochs: 3,
            disc_batch: 64,
            iterations: 500,
            eval_every: 10,
            eval_episodes: 10,
            env_instances: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CoreError::Config(msg));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must be in (0, 1], got {}", format_g17(self.gamma)));
        }
        if !(self.gae_lambda >= 0.0 && self.gae_lambda <= 1.0) {
            return bad(format!(
                "gae_lambda must be in [0, 1], got {}",
                format_g17(self.gae_lambda)
            ));
        }
        if !(self.clip_ratio > 0.0 && self.clip_ratio.is_finite()) {
            return bad(format!(
                "clip_ratio must be positive and finite, got {}",
                format_g17(self.clip_ratio)
            ));
        }
        if !(self.entropy_coef >= 0.0 && self.entropy_coef.is_finite()) {
            return bad(format!(
                "entropy_coef must be >= 0, got {}",
                format_g17(self.entropy_coef)
            ));
        }
        for (name, lr) in [
            ("policy_lr", self.policy_lr),
            ("value_lr", self.value_lr),
            ("disc_lr", self.disc_lr),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {}", format_g17(lr)));
            }
        }
        for (name, v) in [
            ("rollout_steps", self.rollout_steps),
            ("minibatch", self.minibatch),
            ("disc_batch", self.disc_batch),
            ("eval_every", self.eval_every),
            ("eval_episodes", self.eval_episodes),
            ("env_instances", self.env_instances),
        ] {
            if v == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        Ok(())
    }

    /// All fields as `(key, value)` pairs in declaration order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("gamma", format_g17(self.gamma)),
            ("gae_lambda", format_g17(self.gae_lambda)),
            ("clip_ratio", format_g17(self.clip_ratio)),
            ("entropy_coef", format_g17(self.entropy_coef)),
            ("policy_lr", format_g17(self.policy_lr)),
            ("value_lr", format_g17(self.value_lr)),
            ("disc_lr", format_g17(self.disc_lr)),
            ("rollout_steps", format!("{}", self.rollout_steps)),
            ("minibatch", format!("{}", self.minibatch)),
            ("ppo_epochs", format!("{}", self.ppo_epochs)),
            ("disc_epochs", format!("{}", self.disc_epochs)),
            ("disc_batch", format!("{}", self.disc_batch)),
            ("iterations", format!("{}", self.iterations)),
            ("eval_every", format!("{}", self.eval_every)),
            ("eval_episodes", format!("{}", self.eval_episodes)),
            ("env_instances", format!("{}", self.env_instances)),
            ("seed", format!("{}", self.seed)),
        ]
    }

    /// Sets one field from its text form; unknown keys and unparseable
    /// values are config errors.
    pub fn apply_pair(&mut self, key: &str, value: &str) -> Result<()> {
        fn float(key: &str, value: &str) -> Result<f64> {
            value
                .parse::<f64>()
                .map_err(|_| CoreError::Config(format!("bad float for {key}: {value:?}")))
        }
        fn count(key: &str, value: &str) -> Result<usize> {
            value
                .parse::<usize>()
                .map_err(|_| CoreError::Config(format!("bad integer for {key}: {value:?}")))
        }
        match key {
            "gamma" => self.gamma = float(key, value)?,
            "gae_lambda" => self.gae_lambda = float(key, value)?,
            "clip_ratio" => self.clip_ratio = float(key, value)?,
            "entropy_coef" => self.entropy_coef = float(key, value)?,
            "policy_lr" => self.policy_lr = float(key, value)?,
            "value_lr" => self.value_lr = float(key, value)?,
            "disc_lr" => self.disc_lr = float(key, value)?,
            "rollout_steps" => self.rollout_steps = count(key, value)?,
            "minibatch" => self.minibatch = count(key, value)?,
            "ppo_epochs" => self.ppo_epochs = count(key, value)?,
            "disc_epochs" => self.disc_epochs = count(key, value)?,
            "disc_batch" => self.disc_batch = count(key, value)?,
            "iterations" => self.iterations = count(key, value)?,
            "eval_every" => self.eval_every = count(key, value)?,
            "eval_episodes" => self.eval_episodes = count(key, value)?,
            "env_instances" => self.env_instances = count(key, value)?,
            "seed" => {
                self.seed = value
                    .parse::<u64>()
                    .map_err(|_| CoreError::Config(format!("bad integer for seed: {value:?}")))?
            }
            other => return Err(CoreError::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// The flat `key=value` text form, one pair per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.to_pairs() {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    /// Applies `key=value` lines onto `self`. Blank lines and `#` comments
    /// are skipped; anything else must parse.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CoreError::Config(format!("config line {} is not key=value: {line:?}", i + 1))
            })?;
            self.apply_pair(key.trim(), value.trim())?;
        }
        Ok(())
    }
}

// ───────────────────────── rollout data ─────────────────────────

/// Where step rewards come from during collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardSource {
    /// Environment reward, used for expert training and evaluation.
    GroundTruth,
    /// Rewards left at zero, filled afterwards from discriminator scores
    /// (the stack for step t needs the frame at t+1).
    Discriminator,
}

/// One episode's slice of the batch plus its frames.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    /// Index of the episode's first step in the flat arrays.
    pub start: usize,
    /// Number of steps.
    pub len: usize,
    /// `len + 1` frames: one per visited state, terminal state included.
    pub frames: Vec<Arc<Frame>>,
    /// Whether the environment ended the episode (vs. the rollout budget).
    pub terminal: bool,
    /// V(s_end) when truncated by the budget; 0 for terminal episodes.
    pub bootstrap: f64,
}

/// What the policy observed at each step.
#[derive(Debug, Clone)]
pub enum ObsBatch {
    /// Proprio policies observe the recorded states directly.
    Proprio,
    /// Vision policies observe one causal frame stack per step.
    Vision(Vec<FrameStack>),
}

/// Flat per-timestep arrays plus explicit episode boundaries.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    /// Training rewards (ground truth or discriminator-filled).
    pub rewards: Vec<f64>,
    /// Environment rewards, always recorded for reporting.
    pub true_rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub episodes: Vec<EpisodeRecord>,
    pub obs: ObsBatch,
}

impl RolloutBatch {
    pub fn empty(mode: Mode) -> RolloutBatch {
        RolloutBatch {
            states: Vec::new(),
            actions: Vec::new(),
            log_probs: Vec::new(),
            rewards: Vec::new(),
            true_rewards: Vec::new(),
            values: Vec::new(),
            dones: Vec::new(),
            episodes: Vec::new(),
            obs: match mode {
                Mode::Proprio => ObsBatch::Proprio,
                Mode::Vision => ObsBatch::Vision(Vec::new()),
            },
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Verifies the equal-length and episode-partition invariants.
    pub fn check(&self) -> Result<()> {
        let n = self.len();
        let lens = [
            self.actions.len(),
            self.log_probs.len(),
            self.rewards.len(),
            self.true_rewards.len(),
            self.values.len(),
            self.dones.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(CoreError::Usage("rollout arrays have mismatched lengths"));
        }
        if let ObsBatch::Vision(stacks) = &self.obs {
            if stacks.len() != n {
                return Err(CoreError::Usage("vision observation count mismatches steps"));
            }
        }
        let mut next = 0usize;
        for ep in &self.episodes {
            if ep.start != next || ep.len == 0 {
                return Err(CoreError::Usage("episodes must partition the batch in order"));
            }
            if ep.frames.len() != ep.len + 1 {
                return Err(CoreError::Usage("episode must hold len + 1 frames"));
            }
            for i in ep.start..ep.start + ep.len - 1 {
                if self.dones[i] {
                    return Err(CoreError::Usage("done flag inside an episode"));
                }
            }
            if self.dones[ep.start + ep.len - 1] != ep.terminal {
                return Err(CoreError::Usage("episode terminal flag mismatches done flag"));
            }
            next = ep.start + ep.len;
        }
        if next != n {
            return Err(CoreError::Usage("episodes do not cover the batch"));
        }
        Ok(())
    }

    /// Appends another batch collected with the same observation mode,
    /// shifting its episode boundaries.
    pub fn append(&mut self, mut other: RolloutBatch) -> Result<()> {
        let offset = self.len();
        match (&mut self.obs, &mut other.obs) {
            (ObsBatch::Proprio, ObsBatch::Proprio) => {}
            (ObsBatch::Vision(a), ObsBatch::Vision(b)) => a.append(b),
            _ => return Err(CoreError::Usage("cannot append batches of different modes")),
        }
        self.states.append(&mut other.states);
        self.actions.append(&mut other.actions);
        self.log_probs.append(&mut other.log_probs);
        self.rewards.append(&mut other.rewards);
        self.true_rewards.append(&mut other.true_rewards);
        self.values.append(&mut other.values);
        self.dones.append(&mut other.dones);
        for mut ep in other.episodes {
            ep.start += offset;
            self.episodes.push(ep);
        }
        Ok(())
    }

    /// Observation tensor for the given step indices: `[B, state_dim]` for
    /// proprio batches, `[B, 4, 64, 64]` for vision batches.
    pub fn obs_tensor(&self, idxs: &[usize]) -> Result<Tensor> {
        if idxs.is_empty() {
            return Err(CoreError::Usage("empty minibatch"));
        }
        match &self.obs {
            ObsBatch::Proprio => {
                let dim = self.states[idxs[0]].len();
                let mut t = Tensor::zeros(&[idxs.len(), dim]);
                for (row, &i) in idxs.iter().enumerate() {
                    t.data_mut()[row * dim..(row + 1) * dim].copy_from_slice(&self.states[i]);
                }
                Ok(t)
            }
            ObsBatch::Vision(stacks) => {
                let per = 4 * crate::env::render::FRAME_PIXELS;
                let mut t = Tensor::zeros(&[idxs.len(), 4, 64, 64]);
                for (row, &i) in idxs.iter().enumerate() {
                    stacks[i].fill_into(&mut t.data_mut()[row * per..(row + 1) * per]);
                }
                Ok(t)
            }
        }
    }

    /// Action tensor `[B, action_dim]` for the given step indices.
    pub fn action_tensor(&self, idxs: &[usize]) -> Tensor {
        let dim = self.actions[idxs[0]].len();
        let mut t = Tensor::zeros(&[idxs.len(), dim]);
        for (row, &i) in idxs.iter().enumerate() {
            t.data_mut()[row * dim..(row + 1) * dim].copy_from_slice(&self.actions[i]);
        }
        t
    }

    /// Mean ground-truth return per episode. Uses environment-terminated
    /// episodes when any exist, otherwise falls back to all (partial)
    /// episodes; empty batches give NaN.
    pub fn mean_true_return(&self) -> f64 {
        self.episode_stat(|b, ep| {
            b.true_rewards[ep.start..ep.start + ep.len].iter().sum::<f64>()
        })
    }

    /// Mean episode length under the same selection rule.
    pub fn mean_episode_len(&self) -> f64 {
        self.episode_stat(|_, ep| ep.len as f64)
    }

    fn episode_stat(&self, f: impl Fn(&RolloutBatch, &EpisodeRecord) -> f64) -> f64 {
        let terminal: Vec<&EpisodeRecord> =
            self.episodes.iter().filter(|e| e.terminal).collect();
        let pool: Vec<&EpisodeRecord> = if terminal.is_empty() {
            self.episodes.iter().collect()
        } else {
            terminal
        };
        if pool.is_empty() {
            return f64::NAN;
        }
        pool.iter().map(|e| f(self, e)).sum::<f64>() / pool.len() as f64
    }
}

// ───────────────────────── collection ─────────────────────────

/// An environment instance paired with its own action-noise stream, so any
/// grouping of workers across threads replays identically.
#[derive(Debug, Clone)]
pub struct Worker {
    pub env: EnvInstance,
    pub rng: ChaCha8Rng,
}

impl Worker {
    pub fn new(id: EnvId, seed: u64, index: u64) -> Worker {
        Worker {
            env: EnvInstance::new(id, seed, index),
            rng: stream_rng(seed ^ index, stream::ACTION),
        }
    }
}

/// Splits `steps` across `workers` as evenly as possible, extra steps going
/// to the lowest indices. Both the sequential and the threaded collection
/// paths use this split, which keeps batch bytes identical.
pub fn worker_quotas(steps: usize, workers: usize) -> Vec<usize> {
    let base = steps / workers.max(1);
    let rem = steps % workers.max(1);
    (0..workers).map(|i| base + usize::from(i < rem)).collect()
}

/// Runs the policy for `steps` environment steps spread across the workers.
///
/// Every worker starts a fresh episode; episodes cut off by the step budget
/// are recorded as non-terminal with a bootstrap value. Frames are rendered
/// for every visited state, so each episode carries `len + 1` frames.
pub fn collect_rollout(
    policy: &GaussianPolicy,
    value: &ValueNet,
    workers: &mut [Worker],
    steps: usize,
    reward_source: RewardSource,
) -> Result<RolloutBatch> {
    if value.mode() != policy.mode() {
        return Err(CoreError::Usage("policy and value net observation modes differ"));
    }
    let mut batch = RolloutBatch::empty(policy.mode());
    if steps == 0 {
        return Ok(batch);
    }
    if workers.is_empty() {
        return Err(CoreError::Usage("collect_rollout needs at least one worker"));
    }
    let quotas = worker_quotas(steps, workers.len());
    for (worker, &quota) in workers.iter_mut().zip(&quotas) {
        let sub = collect_worker(policy, value, worker, quota, reward_source)?;
        batch.append(sub)?;
    }
    batch.check()?;
    Ok(batch)
}

/// One worker's share of the rollout; public so a threaded driver can run
/// workers independently and merge with [`RolloutBatch::append`].
pub fn collect_worker(
    policy: &GaussianPolicy,
    value: &ValueNet,
    worker: &mut Worker,
    quota: usize,
    reward_source: RewardSource,
) -> Result<RolloutBatch> {
    let mode = policy.mode();
    let mut batch = RolloutBatch::empty(mode);
    if quota == 0 {
        return Ok(batch);
    }
    let env_id = worker.env.spec().id;
    let mut state = worker.env.reset().clone();
    let mut ep_frames: Vec<Arc<Frame>> = vec![Arc::new(render(env_id, &state.s))];
    let mut ep_start = 0usize;
    let mut ep_len = 0usize;

    for step in 0..quota {
        let stack = match mode {
            Mode::Vision => Some(build_causal_stack(&ep_frames, state.steps)),
            Mode::Proprio => None,
        };
        let obs = match &stack {
            Some(st) => Obs::Vision(st),
            None => Obs::Proprio(&state.s),
        };
        let (mean, log_std) = policy.forward(obs)?;
        let action = sample_given(&mean, &log_std, &mut worker.rng);
        let lp = log_prob_given(&mean, &log_std, &action);
        let v = value.value(obs)?;
        let sr = worker.env.step(&action)?;

        batch.states.push(state.s.clone());
        batch.actions.push(action);
        batch.log_probs.push(lp);
        batch.true_rewards.push(sr.reward);
        batch.rewards.push(match reward_source {
            RewardSource::GroundTruth => sr.reward,
            RewardSource::Discriminator => 0.0,
        });
        batch.values.push(v);
        batch.dones.push(sr.done);
        if let (ObsBatch::Vision(list), Some(st)) = (&mut batch.obs, stack) {
            list.push(st);
        }

        state = sr.state;
        ep_frames.push(Arc::new(render(env_id, &state.s)));
        ep_len += 1;

        if sr.done {
            batch.episodes.push(EpisodeRecord {
                start: ep_start,
                len: ep_len,
                frames: core::mem::take(&mut ep_frames),
                terminal: true,
                bootstrap: 0.0,
            });
            ep_start += ep_len;
            ep_len = 0;
            if step + 1 < quota {
                state = worker.env.reset().clone();
                ep_frames = vec![Arc::new(render(env_id, &state.s))];
            }
        }
    }

    if ep_len > 0 {
        // Budget-truncated tail: bootstrap from the value of the state the
        // episode would have continued from.
        let stack = match mode {
            Mode::Vision => Some(build_causal_stack(&ep_frames, state.steps)),
            Mode::Proprio => None,
        };
        let obs = match &stack {
            Some(st) => Obs::Vision(st),
            None => Obs::Proprio(&state.s),
        };
        let bootstrap = value.value(obs)?;
        batch.episodes.push(EpisodeRecord {
            start: ep_start,
            len: ep_len,
            frames: ep_frames,
            terminal: false,
            bootstrap,
        });
    }
    Ok(batch)
}

/// Scores every step's frame stack with the discriminator and writes
/// `-ln(D)` into `batch.rewards`. Returns the imitator stacks in step order —
/// exactly one per timestep — for the subsequent discriminator update.
pub fn fill_imitation_rewards(
    batch: &mut RolloutBatch,
    disc: &Discriminator,
) -> Result<Vec<FrameStack>> {
    batch.check()?;
    let mut stacks = Vec::with_capacity(batch.len());
    for ep in &batch.episodes {
        let ep_stacks = build_stacks(&ep.frames);
        stacks.extend_from_slice(&ep_stacks[..ep.len]);
    }
    let ds = disc.score(&stacks)?;
    for (r, &d) in batch.rewards.iter_mut().zip(&ds) {
        *r = reward_from_d(d);
    }
    Ok(stacks)
}

// ───────────────────────── advantages ─────────────────────────

/// Per-timestep advantage and return-to-go estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageEstimate {
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// Generalized advantage estimation over the batch:
/// `delta_t = r_t + gamma*V(s_{t+1})*(1-done_t) - V(s_t)` and
/// `A_t = delta_t + gamma*lambda*(1-done_t)*A_{t+1}`, episodes independent,
/// with `R_t = A_t + V(s_t)`. Non-terminal episode tails continue into their
/// recorded bootstrap value.
pub fn compute_gae(batch: &RolloutBatch, gamma: f64, gae_lambda: f64) -> Result<AdvantageEstimate> {
    batch.check()?;
    let n = batch.len();
    let mut advantages = vec![0.0; n];
    let mut returns = vec![0.0; n];
    for ep in &batch.episodes {
        let mut a_next = 0.0;
        let mut v_next = if ep.terminal { 0.0 } else { ep.bootstrap };
        for t in (0..ep.len).rev() {
            let i = ep.start + t;
            let not_done = if batch.dones[i] { 0.0 } else { 1.0 };
            let delta = batch.rewards[i] + gamma * v_next * not_done - batch.values[i];
            let a = delta + gamma * gae_lambda * not_done * a_next;
            advantages[i] = a;
            returns[i] = a + batch.values[i];
            a_next = a;
            v_next = batch.values[i];
        }
    }
    Ok(AdvantageEstimate { advantages, returns })
}

/// In-place shift-and-scale to mean 0, std 1 (population std, small guard
/// for degenerate batches). A positive affine map, so per-state action
/// preferences keep their order.
pub fn normalize_advantages(advantages: &mut [f64]) {
    if advantages.is_empty() {
        return;
    }
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = libm::sqrt(var);
    for a in advantages.iter_mut() {
        *a = (*a - mean) / (std + 1e-8);
    }
}

// ───────────────────────── PPO update ─────────────────────────

/// Diagnostics from one PPO update, element-weighted over all minibatches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoStats {
    /// Negative clipped surrogate (the quantity being minimized, entropy
    /// bonus excluded).
    pub policy_loss: f64,
    /// Mean squared error of the value head.
    pub value_loss: f64,
    /// Policy entropy (closed form from log_std).
    pub entropy: f64,
    /// Fraction of samples whose ratio left `[1-eps, 1+eps]`.
    pub clip_fraction: f64,
}

/// Clipped-surrogate PPO update with an entropy bonus, plus a squared-error
/// value-net update on the same minibatches.
///
/// Expects `adv.advantages` already normalized. `ppo_epochs == 0` computes
/// diagnostics without touching any parameters. A non-finite loss aborts
/// with a `NonFinite` error; the caller decides how to recover.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update(
    policy: &mut GaussianPolicy,
    value: &mut ValueNet,
    policy_adam: &mut AdamState,
    value_adam: &mut AdamState,
    batch: &RolloutBatch,
    adv: &AdvantageEstimate,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PpoStats> {
    batch.check()?;
    let n = batch.len();
    if n == 0 {
        return Err(CoreError::Usage("ppo_update needs a non-empty batch"));
    }
    if adv.advantages.len() != n || adv.returns.len() != n {
        return Err(CoreError::Usage("advantage arrays mismatch the batch length"));
    }
    let diagnostics_only = cfg.ppo_epochs == 0;
    let epochs = if diagnostics_only { 1 } else { cfg.ppo_epochs };
    let mb = cfg.minibatch.min(n);

    let mut pl_sum = 0.0;
    let mut vl_sum = 0.0;
    let mut ent_sum = 0.0;
    let mut clipped = 0usize;
    let mut total = 0usize;

    for _ in 0..epochs {
        let mut idxs: Vec<usize> = (0..n).collect();
        if !diagnostics_only {
            idxs.shuffle(rng);
        }
        for chunk in idxs.chunks(mb) {
            let b = chunk.len();
            let x = batch.obs_tensor(chunk)?;
            let actions = batch.action_tensor(chunk);
            let adv_t = gather(&adv.advantages, chunk);
            let ret_t = gather(&adv.returns, chunk);
            let old_lp = gather(&batch.log_probs, chunk);

            // Policy pass.
            let mut g = Graph::new();
            let xn = g.constant(x.clone());
            let (lp, ls) = policy.build_log_prob(&mut g, xn, &actions)?;
            let old = g.constant(old_lp);
            let diff = g.sub(lp, old)?;
            let rho = g.exp(diff)?;
            let lo = 1.0 - cfg.clip_ratio;
            let hi = 1.0 + cfg.clip_ratio;
            let rho_clipped = g.clamp(rho, lo, hi)?;
            let advn = g.constant(adv_t);
            let unclipped = g.mul(rho, advn)?;
            let clipped_term = g.mul(rho_clipped, advn)?;
            let pessimistic = g.min2(unclipped, clipped_term)?;
            let surrogate = g.mean_all(pessimistic)?;
            let ent = policy.build_entropy(&mut g, ls)?;
            let objective = g.add_scaled_scalar(surrogate, ent, cfg.entropy_coef)?;
            let loss = g.affine(objective, -1.0, 0.0)?;

            let loss_v = g.value(loss).item();
            if !loss_v.is_finite() {
                return Err(CoreError::NonFinite("ppo policy objective"));
            }
            pl_sum += -g.value(surrogate).item() * b as f64;
            ent_sum += g.value(ent).item() * b as f64;
            clipped += g
                .value(rho)
                .data()
                .iter()
                .filter(|&&r| r < lo || r > hi)
                .count();
            if !diagnostics_only {
                policy.params.zero_grads();
                g.backward(loss, &mut policy.params)?;
                adam_step(&mut policy.params, policy_adam, cfg.policy_lr)?;
            }

            // Value pass on the same minibatch.
            let mut gv = Graph::new();
            let xv = gv.constant(x);
            let v = value.build_values(&mut gv, xv)?;
            let r = gv.constant(ret_t);
            let dv = gv.sub(v, r)?;
            let sq = gv.mul(dv, dv)?;
            let vloss = gv.mean_all(sq)?;
            let vloss_v = gv.value(vloss).item();
            if !vloss_v.is_finite() {
                return Err(CoreError::NonFinite("value loss"));
            }
            vl_sum += vloss_v * b as f64;
            if !diagnostics_only {
                value.params.zero_grads();
                gv.backward(vloss, &mut value.params)?;
                adam_step(&mut value.params, value_adam, cfg.value_lr)?;
            }

            total += b;
        }
    }

    Ok(PpoStats {
        policy_loss: pl_sum / total as f64,
        value_loss: vl_sum / total as f64,
        entropy: ent_sum / total as f64,
        clip_fraction: clipped as f64 / total as f64,
    })
}

fn gather(xs: &[f64], idxs: &[usize]) -> Tensor {
    let data: Vec<f64> = idxs.iter().map(|&i| xs[i]).collect();
    Tensor::from_vec(&[idxs.len()], data).expect("gather sizes agree")
}

/// Affine normalization of a return against random/expert baselines:
/// `(R - R_random) / (R_expert - R_random)`, deliberately unclamped.
pub fn normalized_score(r: f64, r_random: f64, r_expert: f64) -> Result<f64> {
    if r_expert == r_random {
        return Err(CoreError::State(format!(
            "degenerate baseline: expert and random returns both {}",
            format_g17(r_expert)
        )));
    }
    Ok((r - r_random) / (r_expert - r_random))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{entropy_given, DEFAULT_HIDDEN};
    use rand::Rng;

    fn tiny_policy_value(input: usize, actions: usize) -> (GaussianPolicy, ValueNet) {
        let p = GaussianPolicy::new_proprio(input, actions, &DEFAULT_HIDDEN, 1).unwrap();
        let v = ValueNet::new_proprio(input, &DEFAULT_HIDDEN, 2).unwrap();
        (p, v)
    }

    // ── config ──

    #[test]
    fn config_defaults_validate_and_roundtrip() {
        let cfg = TrainConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.gamma, 0.99);
        assert_eq!(cfg.rollout_steps, 2048);

        let mut other = TrainConfig::default();
        other.gamma = 0.31;
        other.policy_lr = 7.25e-5;
        other.seed = u64::MAX;
        other.iterations = 0;
        let text = other.to_text();
        let mut back = TrainConfig::default();
        back.apply_text(&text).unwrap();
        assert_eq!(back, other);
        // Pair form hits every declared field exactly once.
        assert_eq!(other.to_pairs().len(), 17);
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut cfg = TrainConfig::default();
        cfg.gamma = 0.0;
        assert!(matches!(cfg.validate(), Err(CoreError::Config(_))));
        cfg.gamma = 1.0;
        cfg.validate().unwrap();
        cfg.gae_lambda = 1.5;
        assert!(cfg.validate().is_err());
        cfg.gae_lambda = 0.95;
        cfg.policy_lr = 0.0;
        assert!(cfg.validate().is_err());
        cfg.policy_lr = 3e-4;
        cfg.rollout_steps = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = TrainConfig::default();
        assert!(cfg.apply_pair("gampa", "0.5").is_err());
        assert!(cfg.apply_pair("gamma", "fast").is_err());
        assert!(cfg.apply_text("gamma 0.5").is_err());
        cfg.apply_text("# comment\n\n gamma = 0.5 \n").unwrap();
        assert_eq!(cfg.gamma, 0.5);
    }

    // ── GAE ──

    /// Hand-built batch: states/actions are irrelevant for GAE.
    fn synthetic_batch(eps: &[(usize, bool, f64)], rng: &mut ChaCha8Rng) -> RolloutBatch {
        let mut b = RolloutBatch::empty(Mode::Proprio);
        let mut start = 0;
        for &(len, terminal, bootstrap) in eps {
            let frames: Vec<Arc<Frame>> =
                (0..=len).map(|_| Arc::new(Frame::from_fn(|_, _| false))).collect();
            for t in 0..len {
                b.states.push(vec![0.0]);
                b.actions.push(vec![0.0]);
                b.log_probs.push(0.0);
                let r: f64 = rng.random::<f64>() * 2.0 - 1.0;
                b.rewards.push(r);
                b.true_rewards.push(r);
                b.values.push(rng.random::<f64>() * 2.0 - 1.0);
                b.dones.push(t == len - 1 && terminal);
            }
            b.episodes.push(EpisodeRecord {
                start,
                len,
                frames,
                terminal,
                bootstrap: if terminal { 0.0 } else { bootstrap },
            });
            start += len;
        }
        b.check().unwrap();
        b
    }

    #[test]
    fn gae_matches_brute_force_sum() {
        let mut rng = stream_rng(42, 0);
        let batch = synthetic_batch(
            &[(7, true, 0.0), (5, false, 0.37), (1, true, 0.0), (9, false, -1.25)],
            &mut rng,
        );
        let (gamma, lam) = (0.97, 0.9);
        let got = compute_gae(&batch, gamma, lam).unwrap();

        for ep in &batch.episodes {
            for t in 0..ep.len {
                // delta_k from the definition, using explicit next-values.
                let mut expected = 0.0;
                for k in t..ep.len {
                    let i = ep.start + k;
                    let v_next = if k + 1 < ep.len {
                        batch.values[i + 1]
                    } else if ep.terminal {
                        0.0
                    } else {
                        ep.bootstrap
                    };
                    let not_done = if batch.dones[i] { 0.0 } else { 1.0 };
                    let delta =
                        batch.rewards[i] + gamma * v_next * not_done - batch.values[i];
                    expected += libm::pow(gamma * lam, (k - t) as f64) * delta;
                }
                let i = ep.start + t;
                assert!(
                    (got.advantages[i] - expected).abs() < 1e-12,
                    "ep start {} t {t}: {} vs {expected}",
                    ep.start,
                    got.advantages[i]
                );
                assert!((got.returns[i] - (got.advantages[i] + batch.values[i])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gae_with_unit_discounts_and_zero_values_is_plain_return() {
        let mut rng = stream_rng(9, 0);
        let mut batch = synthetic_batch(&[(6, true, 0.0)], &mut rng);
        for v in batch.values.iter_mut() {
            *v = 0.0;
        }
        let got = compute_gae(&batch, 1.0, 1.0).unwrap();
        let mut tail = 0.0;
        for t in (0..6).rev() {
            tail += batch.rewards[t];
            assert!((got.advantages[t] - tail).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_single_step_episode_is_reward_minus_value() {
        let mut rng = stream_rng(17, 0);
        let batch = synthetic_batch(&[(1, true, 0.0)], &mut rng);
        let got = compute_gae(&batch, 0.99, 0.95).unwrap();
        assert_eq!(got.advantages[0], batch.rewards[0] - batch.values[0]);
    }

    #[test]
    fn gae_rejects_mismatched_lengths() {
        let mut rng = stream_rng(3, 0);
        let mut batch = synthetic_batch(&[(4, true, 0.0)], &mut rng);
        batch.rewards.pop();
        assert!(matches!(
            compute_gae(&batch, 0.99, 0.95),
            Err(CoreError::Usage(_))
        ));
    }

    #[test]
    fn normalization_centers_scales_and_preserves_order() {
        let mut rng = stream_rng(8, 0);
        let mut advs: Vec<f64> = (0..64).map(|_| rng.random::<f64>() * 10.0 - 3.0).collect();
        let before = advs.clone();
        normalize_advantages(&mut advs);
        let n = advs.len() as f64;
        let mean = advs.iter().sum::<f64>() / n;
        let std = libm::sqrt(advs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n);
        assert!(mean.abs() < 1e-9, "mean {mean}");
        assert!((std - 1.0).abs() < 1e-6, "std {std}");
        for i in 0..before.len() {
            for j in 0..before.len() {
                if before[i] < before[j] {
                    assert!(advs[i] < advs[j]);
                }
            }
        }
        let mut flat = vec![2.5; 10];
        normalize_advantages(&mut flat);
        assert!(flat.iter().all(|&a| a == 0.0));
    }

    // ── rollout ──

    #[test]
    fn quotas_split_evenly_with_remainder_first() {
        assert_eq!(worker_quotas(10, 3), vec![4, 3, 3]);
        assert_eq!(worker_quotas(6, 3), vec![2, 2, 2]);
        assert_eq!(worker_quotas(2, 4), vec![1, 1, 0, 0]);
        assert_eq!(worker_quotas(0, 2), vec![0, 0]);
    }

    #[test]
    fn rollout_steps_zero_gives_empty_batch() {
        let (p, v) = tiny_policy_value(4, 1);
        let mut workers = vec![Worker::new(EnvId::CartpoleBalance, 7, 0)];
        let b = collect_rollout(&p, &v, &mut workers, 0, RewardSource::GroundTruth).unwrap();
        assert!(b.is_empty());
        assert!(b.episodes.is_empty());
    }

    #[test]
    fn rollout_is_deterministic_and_replayable() {
        let (p, v) = tiny_policy_value(4, 1);
        let run = |seed: u64| {
            let mut workers: Vec<Worker> =
                (0..2).map(|i| Worker::new(EnvId::CartpoleBalance, seed, i)).collect();
            collect_rollout(&p, &v, &mut workers, 37, RewardSource::GroundTruth).unwrap()
        };
        let a = run(11);
        let b = run(11);
        assert_eq!(a.states, b.states);
        assert_eq!(a.actions, b.actions);
        assert_eq!(a.log_probs, b.log_probs);
        assert_eq!(a.rewards, b.rewards);
        let c = run(12);
        assert_ne!(a.states, c.states);

        // Replay oracle: step fresh instances with the recorded actions and
        // demand bit-identical states, rewards, and done flags.
        let quotas = worker_quotas(37, 2);
        let mut step_idx = 0;
        for (w, &quota) in quotas.iter().enumerate() {
            let mut env = EnvInstance::new(EnvId::CartpoleBalance, 11, w as u64);
            let mut state = env.reset().clone();
            for _ in 0..quota {
                assert_eq!(state.s, a.states[step_idx]);
                let sr = env.step(&a.actions[step_idx]).unwrap();
                assert_eq!(sr.reward, a.true_rewards[step_idx]);
                assert_eq!(sr.done, a.dones[step_idx]);
                state = sr.state;
                if sr.done {
                    state = env.reset().clone();
                }
                step_idx += 1;
            }
        }
        assert_eq!(step_idx, 37);

        // Episode bookkeeping: partition plus len+1 frames each.
        a.check().unwrap();
        for ep in &a.episodes {
            assert_eq!(ep.frames.len(), ep.len + 1);
            if ep.terminal {
                assert!(a.dones[ep.start + ep.len - 1]);
            } else {
                assert!(ep.bootstrap.is_finite());
            }
        }
        let total: usize = a.episodes.iter().map(|e| e.len).sum();
        assert_eq!(total, 37);
    }

    #[test]
    fn vision_rollout_records_causal_stacks() {
        let p = GaussianPolicy::new_vision(2, 3).unwrap();
        let v = ValueNet::new_vision(4).unwrap();
        let mut workers = vec![Worker::new(EnvId::PointMass, 5, 0)];
        let b = collect_rollout(&p, &v, &mut workers, 6, RewardSource::GroundTruth).unwrap();
        assert_eq!(b.len(), 6);
        let ObsBatch::Vision(stacks) = &b.obs else {
            panic!("expected vision observations")
        };
        assert_eq!(stacks.len(), 6);
        // Point-mass never terminates early, so this is one episode and the
        // stack at step t ends with frame t.
        let ep = &b.episodes[0];
        assert!(!ep.terminal);
        for (t, stack) in stacks.iter().enumerate() {
            assert!(Arc::ptr_eq(&stack.frames()[3], &ep.frames[t]));
            let back = t.saturating_sub(3);
            assert!(Arc::ptr_eq(&stack.frames()[0], &ep.frames[back]));
        }
    }

    #[test]
    fn mode_mismatch_is_a_usage_error() {
        let p = GaussianPolicy::new_proprio(4, 2, &DEFAULT_HIDDEN, 1).unwrap();
        let v = ValueNet::new_vision(2).unwrap();
        let mut workers = vec![Worker::new(EnvId::PointMass, 5, 0)];
        let err = collect_rollout(&p, &v, &mut workers, 4, RewardSource::GroundTruth);
        assert!(matches!(err, Err(CoreError::Usage(_))));
    }

    #[test]
    fn imitation_rewards_come_from_stack_scores() {
        let (p, v) = tiny_policy_value(4, 2);
        let mut workers = vec![Worker::new(EnvId::PointMass, 21, 0)];
        let mut batch =
            collect_rollout(&p, &v, &mut workers, 12, RewardSource::Discriminator).unwrap();
        assert!(batch.rewards.iter().all(|&r| r == 0.0));
        assert!(batch.true_rewards.iter().any(|&r| r != 0.0));
        let disc = Discriminator::new(33).unwrap();
        let stacks = fill_imitation_rewards(&mut batch, &disc).unwrap();
        assert_eq!(stacks.len(), batch.len());
        let ds = disc.score(&stacks).unwrap();
        for (i, &d) in ds.iter().enumerate() {
            assert_eq!(batch.rewards[i], reward_from_d(d));
        }
        // Unfooled fresh discriminator scores hover near 0.5, so rewards sit
        // near ln 2.
        for &r in &batch.rewards {
            assert!(r > 0.0 && r < 14.0);
        }
    }

    // ── PPO ──

    /// Analytic first Adam step (zeroed moments): p -= lr * g / (|g| + eps).
    fn hand_adam_first_step(p0: f64, g: f64, lr: f64) -> f64 {
        p0 - lr * g / (libm::sqrt(g * g) + 1e-8)
    }

    #[test]
    fn ratio_one_update_matches_hand_assembled_gradient_step() {
        // Linear Gaussian policy (no hidden layers): the policy-gradient and
        // entropy gradients have closed forms, so the whole first PPO step
        // can be assembled by hand and compared parameter by parameter.
        let policy = GaussianPolicy::new_proprio(4, 2, &[], 15).unwrap();
        let value = ValueNet::new_proprio(4, &[], 16).unwrap();
        let mut p = policy.clone();
        let mut v = value.clone();
        let mut workers = vec![Worker::new(EnvId::PointMass, 19, 0)];
        let batch = collect_rollout(&p, &v, &mut workers, 8, RewardSource::GroundTruth).unwrap();
        let mut adv = compute_gae(&batch, 0.99, 0.95).unwrap();
        normalize_advantages(&mut adv.advantages);

        let mut cfg = TrainConfig::default();
        cfg.clip_ratio = 1e12; // effectively unclipped
        cfg.entropy_coef = 0.01;
        cfg.ppo_epochs = 1;
        cfg.minibatch = 64; // full batch in one chunk
        let mut pa = AdamState::new(&p.params);
        let mut va = AdamState::new(&v.params);
        let mut rng = stream_rng(19, stream::PPO_SHUFFLE);
        let stats =
            ppo_update(&mut p, &mut v, &mut pa, &mut va, &batch, &adv, &cfg, &mut rng).unwrap();
        assert_eq!(stats.clip_fraction, 0.0);

        // Hand gradients. With ratios at 1, d/dtheta of the surrogate is
        // mean_t[A_t * dlogpi_t]; entropy adds 1 per log_std dim.
        let n = batch.len() as f64;
        let w0 = &policy.params.get("policy/fc0_w").unwrap().value;
        let b0 = &policy.params.get("policy/fc0_b").unwrap().value;
        let ls0 = &policy.params.get("policy/log_std").unwrap().value;
        let mut gw = vec![0.0; 8];
        let mut gb = vec![0.0; 2];
        let mut gls = vec![0.0; 2];
        for t in 0..batch.len() {
            let s = &batch.states[t];
            let a = &batch.actions[t];
            let adv_t = adv.advantages[t];
            for o in 0..2 {
                let mut mu = b0.data()[o];
                for i in 0..4 {
                    mu += w0.data()[o * 4 + i] * s[i];
                }
                let inv_std = libm::exp(-ls0.data()[o]);
                let z = (a[o] - mu) * inv_std;
                let dmu = z * inv_std;
                for i in 0..4 {
                    gw[o * 4 + i] += -(adv_t * dmu * s[i]) / n;
                }
                gb[o] += -(adv_t * dmu) / n;
                gls[o] += -(adv_t * (z * z - 1.0)) / n;
            }
        }
        for o in 0..2 {
            gls[o] -= cfg.entropy_coef;
        }
        let wa = &p.params.get("policy/fc0_w").unwrap().value;
        let ba = &p.params.get("policy/fc0_b").unwrap().value;
        let lsa = &p.params.get("policy/log_std").unwrap().value;
        for (j, &g) in gw.iter().enumerate() {
            let want = hand_adam_first_step(w0.data()[j], g, cfg.policy_lr);
            assert!((wa.data()[j] - want).abs() < 1e-10, "w[{j}]");
        }
        for (j, &g) in gb.iter().enumerate() {
            let want = hand_adam_first_step(b0.data()[j], g, cfg.policy_lr);
            assert!((ba.data()[j] - want).abs() < 1e-10, "b[{j}]");
        }
        for (j, &g) in gls.iter().enumerate() {
            let want = hand_adam_first_step(ls0.data()[j], g, cfg.policy_lr);
            assert!((lsa.data()[j] - want).abs() < 1e-10, "ls[{j}]");
        }

        // Linear value net: loss = mean (w.s + b - R)^2.
        let vw0 = &value.params.get("value/fc0_w").unwrap().value;
        let vb0 = &value.params.get("value/fc0_b").unwrap().value;
        let mut gvw = vec![0.0; 4];
        let mut gvb = 0.0;
        for t in 0..batch.len() {
            let s = &batch.states[t];
            let mut pred = vb0.data()[0];
            for i in 0..4 {
                pred += vw0.data()[i] * s[i];
            }
            let resid = 2.0 * (pred - adv.returns[t]) / n;
            for i in 0..4 {
                gvw[i] += resid * s[i];
            }
            gvb += resid;
        }
        let vwa = &v.params.get("value/fc0_w").unwrap().value;
        let vba = &v.params.get("value/fc0_b").unwrap().value;
        for (j, &g) in gvw.iter().enumerate() {
            let want = hand_adam_first_step(vw0.data()[j], g, cfg.value_lr);
            assert!((vwa.data()[j] - want).abs() < 1e-10, "vw[{j}]");
        }
        let want = hand_adam_first_step(vb0.data()[0], gvb, cfg.value_lr);
        assert!((vba.data()[0] - want).abs() < 1e-10, "vb");
    }

    /// One-sample batch whose behavior log-prob is shifted so the ratio
    /// lands far outside the clip range.
    fn clipped_sample_batch(policy: &GaussianPolicy, lp_shift: f64, adv: f64) -> (RolloutBatch, AdvantageEstimate) {
        let s = vec![0.3, -0.2, 0.1, 0.05];
        let a = vec![0.4, -0.6];
        let lp = policy.log_prob(Obs::Proprio(&s), &a).unwrap();
        let mut b = RolloutBatch::empty(Mode::Proprio);
        b.states.push(s);
        b.actions.push(a);
        b.log_probs.push(lp + lp_shift);
        b.rewards.push(0.0);
        b.true_rewards.push(0.0);
        b.values.push(0.0);
        b.dones.push(true);
        b.episodes.push(EpisodeRecord {
            start: 0,
            len: 1,
            frames: vec![
                Arc::new(Frame::from_fn(|_, _| false)),
                Arc::new(Frame::from_fn(|_, _| false)),
            ],
            terminal: true,
            bootstrap: 0.0,
        });
        let est = AdvantageEstimate {
            advantages: vec![adv],
            returns: vec![0.0],
        };
        (b, est)
    }

    #[test]
    fn clipped_samples_contribute_zero_policy_gradient() {
        // ratio = exp(lp - old_lp); shifting old_lp by -ln 3 makes the ratio
        // 3 (> 1.2), and +ln 3 makes it 1/3 (< 0.8). With the advantage sign
        // matched, the pessimistic min always selects the clipped constant,
        // so the policy must not move at all.
        for (shift, advantage) in [(-(3.0f64.ln()), 1.0), (3.0f64.ln(), -1.0)] {
            let mut p = GaussianPolicy::new_proprio(4, 2, &DEFAULT_HIDDEN, 15).unwrap();
            let mut v = ValueNet::new_proprio(4, &DEFAULT_HIDDEN, 16).unwrap();
            let before = p.params.clone();
            let (batch, adv) = clipped_sample_batch(&p, shift, advantage);
            let mut cfg = TrainConfig::default();
            cfg.entropy_coef = 0.0;
            cfg.ppo_epochs = 1;
            cfg.minibatch = 1;
            let mut pa = AdamState::new(&p.params);
            let mut va = AdamState::new(&v.params);
            let mut rng = stream_rng(0, stream::PPO_SHUFFLE);
            let stats =
                ppo_update(&mut p, &mut v, &mut pa, &mut va, &batch, &adv, &cfg, &mut rng)
                    .unwrap();
            assert_eq!(stats.clip_fraction, 1.0);
            assert_eq!(p.params, before, "policy moved on a fully clipped sample");
        }
    }

    #[test]
    fn zero_epochs_reports_diagnostics_without_updates() {
        let (mut p, mut v) = tiny_policy_value(4, 1);
        let mut workers = vec![Worker::new(EnvId::CartpoleBalance, 3, 0)];
        let batch = collect_rollout(&p, &v, &mut workers, 16, RewardSource::GroundTruth).unwrap();
        let mut adv = compute_gae(&batch, 0.99, 0.95).unwrap();
        normalize_advantages(&mut adv.advantages);
        let p_before = p.params.clone();
        let v_before = v.params.clone();
        let mut cfg = TrainConfig::default();
        cfg.ppo_epochs = 0;
        let mut pa = AdamState::new(&p.params);
        let mut va = AdamState::new(&v.params);
        let mut rng = stream_rng(3, stream::PPO_SHUFFLE);
        let stats =
            ppo_update(&mut p, &mut v, &mut pa, &mut va, &batch, &adv, &cfg, &mut rng).unwrap();
        assert_eq!(p.params, p_before);
        assert_eq!(v.params, v_before);
        assert_eq!(pa.step_count(), 0);
        assert_eq!(va.step_count(), 0);
        // Freshly collected batch: ratios are 1 up to rounding, so nothing
        // clips and the (negated) surrogate is minus the advantage mean.
        assert_eq!(stats.clip_fraction, 0.0);
        let mean_adv = adv.advantages.iter().sum::<f64>() / adv.advantages.len() as f64;
        assert!((stats.policy_loss - -mean_adv).abs() < 1e-9);
        assert!((stats.entropy - entropy_given(p.log_std())).abs() < 1e-12);
        assert!(stats.value_loss >= 0.0);
    }

    #[test]
    fn entropy_coefficient_zero_still_reports_entropy() {
        let (mut p, mut v) = tiny_policy_value(4, 1);
        let mut workers = vec![Worker::new(EnvId::CartpoleBalance, 5, 0)];
        let batch = collect_rollout(&p, &v, &mut workers, 8, RewardSource::GroundTruth).unwrap();
        let mut adv = compute_gae(&batch, 0.99, 0.95).unwrap();
        normalize_advantages(&mut adv.advantages);
        let mut cfg = TrainConfig::default();
        cfg.entropy_coef = 0.0;
        cfg.ppo_epochs = 1;
        let mut pa = AdamState::new(&p.params);
        let mut va = AdamState::new(&v.params);
        let mut rng = stream_rng(5, stream::PPO_SHUFFLE);
        let stats =
            ppo_update(&mut p, &mut v, &mut pa, &mut va, &batch, &adv, &cfg, &mut rng).unwrap();
        assert!(stats.entropy.is_finite() && stats.entropy != 0.0);
        assert!(stats.clip_fraction >= 0.0 && stats.clip_fraction <= 1.0);
    }

    #[test]
    fn normalized_score_is_the_affine_map() {
        assert_eq!(normalized_score(10.0, 2.0, 10.0).unwrap(), 1.0);
        assert_eq!(normalized_score(2.0, 2.0, 10.0).unwrap(), 0.0);
        assert_eq!(normalized_score(6.0, 2.0, 10.0).unwrap(), 0.5);
        assert_eq!(normalized_score(14.0, 2.0, 10.0).unwrap(), 1.5);
        assert_eq!(normalized_score(-2.0, 2.0, 10.0).unwrap(), -0.5);
        assert!(matches!(
            normalized_score(1.0, 3.0, 3.0),
            Err(CoreError::State(_))
        ));
    }
}
