//! End-to-end operations: expert training, demo recording, imitation,
//! and evaluation.
//!
//! Every operation is a plain function over loaded objects; the CLI layer
//! owns argument parsing and file loading. A run directory always looks the
//! same: `config.txt` (the exact hyperparameters, reloadable), `metrics.csv`
//! (one row per completed iteration), and `checkpoints/` holding
//! `iter_NNNNNN.pifo` snapshots plus `best.pifo`, the highest-scoring
//! policy so far (present from iteration zero, so a run of zero iterations
//! leaves the initial policy behind).
//!
//! Evaluation always plays the mean action. Episode `i` of any evaluation
//! uses the environment stream `(seed ^ EVAL, i)`, so repeated evaluations
//! within a run and the random/expert baselines all see identical initial
//! states; paired baselines are what make the normalized score exact at its
//! anchor points (a fresh policy scores 0, the expert scores 1).
//!
//! A non-finite policy, value, or discriminator loss aborts that iteration:
//! parameters and optimizer states roll back to the iteration start, the
//! metrics row is marked `aborted` with `nan` loss columns, and training
//! continues (rollout streams keep advancing, so the next iteration sees
//! fresh data rather than replaying the failure).

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use pifo_core::adam::AdamState;
use pifo_core::disc::{build_causal_stack, disc_update, DiscStats, Discriminator, FrameStack};
use pifo_core::env::render::Frame;
use pifo_core::env::{spec_for, EnvId, EnvInstance};
use pifo_core::nn::ParamSet;
use pifo_core::policy::{sample_given, GaussianPolicy, Mode, Obs, ValueNet, DEFAULT_HIDDEN};
use pifo_core::rl::{
    compute_gae, fill_imitation_rewards, normalize_advantages, normalized_score, ppo_update,
    PpoStats, RewardSource, TrainConfig, Worker,
};
use pifo_core::rng::{stream, stream_rng};
use pifo_core::CoreError;

use crate::checkpoint::save_policy;
use crate::demo::DemoSet;
use crate::error::{AppError, Result};
use crate::metrics::{MetricsRow, MetricsWriter};
use crate::threads::{collect_rollout_threaded, thread_count};

/// Canonical file layout of one run directory.
pub struct RunPaths {
    pub root: PathBuf,
    pub checkpoints: PathBuf,
}

impl RunPaths {
    /// Creates the directory tree and writes `config.txt`.
    pub fn create(root: &Path, cfg: &TrainConfig) -> Result<RunPaths> {
        let checkpoints = root.join("checkpoints");
        std::fs::create_dir_all(&checkpoints).map_err(AppError::io(&checkpoints))?;
        let config = root.join("config.txt");
        std::fs::write(&config, cfg.to_text()).map_err(AppError::io(&config))?;
        Ok(RunPaths { root: root.to_path_buf(), checkpoints })
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.txt")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn best(&self) -> PathBuf {
        self.checkpoints.join("best.pifo")
    }

    pub fn iter_checkpoint(&self, iteration: usize) -> PathBuf {
        self.checkpoints.join(format!("iter_{iteration:06}.pifo"))
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean: sample standard deviation over √n.
pub fn std_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Plays `episodes` mean-action episodes and returns each episode's true
/// return. Episode `i` uses the environment stream `(seed ^ EVAL, i)`.
pub fn eval_returns(
    policy: &GaussianPolicy,
    env: EnvId,
    episodes: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let mut inst = EnvInstance::new(env, seed ^ stream::EVAL, i as u64);
        let mut frames: Vec<Arc<Frame>> = Vec::new();
        let mut ret = 0.0;
        loop {
            let action = match policy.mode() {
                Mode::Proprio => policy.forward(Obs::Proprio(&inst.state().s))?.0,
                Mode::Vision => {
                    frames.push(Arc::new(inst.render()));
                    let stack = build_causal_stack(&frames, frames.len() - 1);
                    policy.forward(Obs::Vision(&stack))?.0
                }
            };
            let step = inst.step(&action)?;
            ret += step.reward;
            if step.done {
                break;
            }
        }
        out.push(ret);
    }
    Ok(out)
}

/// Rounds every parameter through f32, the checkpoint storage precision.
pub fn quantize_params_f32(params: &mut ParamSet) {
    for i in 0..params.len() {
        let e = params.entry_mut(i);
        e.value = e.value.map(|v| (v as f32) as f64);
    }
}

/// The random baseline: a freshly initialized policy using the same seed
/// derivation as training, rounded through f32 so it matches a checkpoint
/// of that policy bit for bit.
pub fn random_baseline_policy(mode: Mode, env: EnvId, seed: u64) -> Result<GaussianPolicy> {
    let spec = spec_for(env);
    let mut policy = match mode {
        Mode::Proprio => GaussianPolicy::new_proprio(
            spec.proprio_dim,
            spec.action_dim,
            &DEFAULT_HIDDEN,
            seed ^ stream::POLICY_INIT,
        )?,
        Mode::Vision => GaussianPolicy::new_vision(spec.action_dim, seed ^ stream::POLICY_INIT)?,
    };
    quantize_params_f32(&mut policy.params);
    Ok(policy)
}

fn new_policy(mode: Mode, env: EnvId, seed: u64) -> Result<GaussianPolicy> {
    let spec = spec_for(env);
    Ok(match mode {
        Mode::Proprio => GaussianPolicy::new_proprio(
            spec.proprio_dim,
            spec.action_dim,
            &DEFAULT_HIDDEN,
            seed ^ stream::POLICY_INIT,
        )?,
        Mode::Vision => GaussianPolicy::new_vision(spec.action_dim, seed ^ stream::POLICY_INIT)?,
    })
}

fn new_value(mode: Mode, env: EnvId, seed: u64) -> Result<ValueNet> {
    let spec = spec_for(env);
    Ok(match mode {
        Mode::Proprio => {
            ValueNet::new_proprio(spec.proprio_dim, &DEFAULT_HIDDEN, seed ^ stream::VALUE_INIT)?
        }
        Mode::Vision => ValueNet::new_vision(seed ^ stream::VALUE_INIT)?,
    })
}

/// Summary of a finished training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub iterations: usize,
    /// Best mean evaluation return seen at any evaluation point.
    pub best_return: f64,
    /// Mean evaluation return at the final evaluation point.
    pub final_return: f64,
    pub aborted_iterations: usize,
}

/// Trains a proprioceptive expert with PPO on the true reward.
pub fn train_expert(env: EnvId, cfg: &TrainConfig, out: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    let threads = thread_count()?;
    let paths = RunPaths::create(out, cfg)?;
    let seed = cfg.seed;

    let mut policy = new_policy(Mode::Proprio, env, seed)?;
    let mut value = new_value(Mode::Proprio, env, seed)?;
    let mut policy_adam = AdamState::new(&policy.params);
    let mut value_adam = AdamState::new(&value.params);
    let mut workers: Vec<Worker> =
        (0..cfg.env_instances).map(|i| Worker::new(env, seed, i as u64)).collect();
    let mut ppo_rng = stream_rng(seed, stream::PPO_SHUFFLE);

    let mut writer = MetricsWriter::create(&paths.metrics())?;
    let start = Instant::now();
    save_policy(&policy, env, &paths.best())?;
    let mut best_return = f64::NEG_INFINITY;
    let mut final_return = f64::NAN;
    let mut aborted_iterations = 0usize;

    for iteration in 1..=cfg.iterations {
        let batch = collect_rollout_threaded(
            &policy,
            &value,
            &mut workers,
            cfg.rollout_steps,
            RewardSource::GroundTruth,
            threads,
        )?;
        let snapshot =
            (policy.params.clone(), value.params.clone(), policy_adam.clone(), value_adam.clone());
        let stats = (|| -> std::result::Result<PpoStats, CoreError> {
            let mut adv = compute_gae(&batch, cfg.gamma, cfg.gae_lambda)?;
            normalize_advantages(&mut adv.advantages);
            ppo_update(
                &mut policy,
                &mut value,
                &mut policy_adam,
                &mut value_adam,
                &batch,
                &adv,
                cfg,
                &mut ppo_rng,
            )
        })();
        let wall_clock_s = start.elapsed().as_secs_f64();
        let row = match stats {
            Ok(s) => {
                let eval_point = iteration % cfg.eval_every == 0 || iteration == cfg.iterations;
                if eval_point {
                    let ret = mean(&eval_returns(&policy, env, cfg.eval_episodes, seed)?);
                    final_return = ret;
                    if ret > best_return {
                        best_return = ret;
                        save_policy(&policy, env, &paths.best())?;
                    }
                    save_policy(&policy, env, &paths.iter_checkpoint(iteration))?;
                }
                MetricsRow {
                    iteration,
                    wall_clock_s,
                    disc_loss: f64::NAN,
                    mean_d_imitator: f64::NAN,
                    mean_d_expert: f64::NAN,
                    policy_loss: s.policy_loss,
                    value_loss: s.value_loss,
                    entropy: s.entropy,
                    clip_fraction: s.clip_fraction,
                    mean_true_return: batch.mean_true_return(),
                    mean_episode_len: batch.mean_episode_len(),
                    normalized_score: f64::NAN,
                    aborted: false,
                }
            }
            Err(CoreError::NonFinite(_)) => {
                policy.params = snapshot.0;
                value.params = snapshot.1;
                policy_adam = snapshot.2;
                value_adam = snapshot.3;
                aborted_iterations += 1;
                MetricsRow {
                    iteration,
                    wall_clock_s,
                    disc_loss: f64::NAN,
                    mean_d_imitator: f64::NAN,
                    mean_d_expert: f64::NAN,
                    policy_loss: f64::NAN,
                    value_loss: f64::NAN,
                    entropy: f64::NAN,
                    clip_fraction: f64::NAN,
                    mean_true_return: batch.mean_true_return(),
                    mean_episode_len: batch.mean_episode_len(),
                    normalized_score: f64::NAN,
                    aborted: true,
                }
            }
            Err(e) => return Err(e.into()),
        };
        writer.append(&row)?;
    }
    Ok(TrainOutcome {
        iterations: cfg.iterations,
        best_return,
        final_return,
        aborted_iterations,
    })
}

/// Rolls out a policy for `k` episodes and keeps only the rendered frames,
/// one per step. Trajectory `t` resets from the environment stream
/// `(seed ^ DEMOS, t)` and, when sampling, draws action noise from its own
/// stream.
pub fn record_demos(
    policy: &GaussianPolicy,
    env: EnvId,
    k: usize,
    deterministic: bool,
    seed: u64,
) -> Result<DemoSet> {
    if k == 0 {
        return Err(AppError::Usage("--num-trajectories must be at least 1".into()));
    }
    let mut trajectories = Vec::with_capacity(k);
    for t in 0..k {
        let mut inst = EnvInstance::new(env, seed ^ stream::DEMOS, t as u64);
        let mut action_rng = stream_rng((seed ^ stream::DEMOS) ^ t as u64, stream::ACTION);
        let mut frames: Vec<Arc<Frame>> = Vec::new();
        loop {
            frames.push(Arc::new(inst.render()));
            let (mean_action, log_std) = match policy.mode() {
                Mode::Proprio => policy.forward(Obs::Proprio(&inst.state().s))?,
                Mode::Vision => {
                    let stack = build_causal_stack(&frames, frames.len() - 1);
                    policy.forward(Obs::Vision(&stack))?
                }
            };
            let action = if deterministic {
                mean_action
            } else {
                sample_given(&mean_action, &log_std, &mut action_rng)
            };
            if inst.step(&action)?.done {
                break;
            }
        }
        trajectories.push(frames);
    }
    DemoSet::new(env, trajectories)
}

/// Summary of a finished imitation run.
#[derive(Debug, Clone)]
pub struct ImitateOutcome {
    pub iterations: usize,
    /// Normalized score at the final evaluation point (nan without an
    /// expert baseline).
    pub final_score: f64,
    pub best_score: f64,
    pub aborted_iterations: usize,
}

/// Trains an imitator against demonstration frames alone: the policy earns
/// `-ln D` from a discriminator that tries to tell its frame stacks from
/// the expert's.
///
/// Per iteration: collect a rollout, score its stacks with the current
/// discriminator to fill rewards, update the policy and value net with PPO,
/// then update the discriminator on this rollout's stacks versus expert
/// stacks. The optional expert policy is used only to anchor the normalized
/// score; without it score columns are `nan`.
pub fn imitate(
    demos: &DemoSet,
    env: EnvId,
    mode: Mode,
    cfg: &TrainConfig,
    out: &Path,
    expert: Option<&GaussianPolicy>,
) -> Result<ImitateOutcome> {
    cfg.validate()?;
    if demos.env() != env {
        return Err(AppError::Usage(format!(
            "--demos were recorded on {} but --env is {}",
            demos.env().as_str(),
            env.as_str()
        )));
    }
    let threads = thread_count()?;
    let paths = RunPaths::create(out, cfg)?;
    let seed = cfg.seed;

    let mut policy = new_policy(mode, env, seed)?;
    let mut value = new_value(mode, env, seed)?;
    let mut disc = Discriminator::new(seed ^ stream::DISC_INIT)?;
    let mut policy_adam = AdamState::new(&policy.params);
    let mut value_adam = AdamState::new(&value.params);
    let mut disc_adam = AdamState::new(&disc.params);
    let mut workers: Vec<Worker> =
        (0..cfg.env_instances).map(|i| Worker::new(env, seed, i as u64)).collect();
    let mut ppo_rng = stream_rng(seed, stream::PPO_SHUFFLE);
    let mut disc_rng = stream_rng(seed, stream::DISC_BATCH);
    let expert_stacks: Vec<FrameStack> = demos.all_stacks();

    // Baselines for the normalized score. The random baseline is this run's
    // own initial policy, so the score starts at exactly zero.
    let baselines = match expert {
        Some(e) => {
            let r_expert = mean(&eval_returns(e, env, cfg.eval_episodes, seed)?);
            let r_random = mean(&eval_returns(&policy, env, cfg.eval_episodes, seed)?);
            Some((r_random, r_expert))
        }
        None => None,
    };
    let mut latest_score = match baselines {
        Some((r_random, r_expert)) => normalized_score(r_random, r_random, r_expert)?,
        None => f64::NAN,
    };

    let mut writer = MetricsWriter::create(&paths.metrics())?;
    let start = Instant::now();
    save_policy(&policy, env, &paths.best())?;
    let mut best_return = match baselines {
        Some((r_random, _)) => r_random,
        None => f64::NEG_INFINITY,
    };
    let mut best_score = latest_score;
    let mut aborted_iterations = 0usize;

    for iteration in 1..=cfg.iterations {
        let mut batch = collect_rollout_threaded(
            &policy,
            &value,
            &mut workers,
            cfg.rollout_steps,
            RewardSource::Discriminator,
            threads,
        )?;
        let imitator_stacks = fill_imitation_rewards(&mut batch, &disc)?;
        let snapshot = (
            policy.params.clone(),
            value.params.clone(),
            disc.params.clone(),
            policy_adam.clone(),
            value_adam.clone(),
            disc_adam.clone(),
        );
        let stats = (|| -> std::result::Result<(PpoStats, DiscStats), CoreError> {
            let mut adv = compute_gae(&batch, cfg.gamma, cfg.gae_lambda)?;
            normalize_advantages(&mut adv.advantages);
            let ppo = ppo_update(
                &mut policy,
                &mut value,
                &mut policy_adam,
                &mut value_adam,
                &batch,
                &adv,
                cfg,
                &mut ppo_rng,
            )?;
            let ds = disc_update(
                &mut disc,
                &mut disc_adam,
                &imitator_stacks,
                &expert_stacks,
                cfg.disc_lr,
                cfg.disc_epochs,
                cfg.disc_batch,
                &mut disc_rng,
            )?;
            Ok((ppo, ds))
        })();
        let wall_clock_s = start.elapsed().as_secs_f64();
        let row = match stats {
            Ok((ppo, ds)) => {
                let eval_point = iteration % cfg.eval_every == 0 || iteration == cfg.iterations;
                if eval_point {
                    let ret = mean(&eval_returns(&policy, env, cfg.eval_episodes, seed)?);
                    if let Some((r_random, r_expert)) = baselines {
                        latest_score = normalized_score(ret, r_random, r_expert)?;
                    }
                    if ret > best_return {
                        best_return = ret;
                        best_score = latest_score;
                        save_policy(&policy, env, &paths.best())?;
                    }
                    save_policy(&policy, env, &paths.iter_checkpoint(iteration))?;
                }
                MetricsRow {
                    iteration,
                    wall_clock_s,
                    disc_loss: ds.loss,
                    mean_d_imitator: ds.mean_d_imitator,
                    mean_d_expert: ds.mean_d_expert,
                    policy_loss: ppo.policy_loss,
                    value_loss: ppo.value_loss,
                    entropy: ppo.entropy,
                    clip_fraction: ppo.clip_fraction,
                    mean_true_return: batch.mean_true_return(),
                    mean_episode_len: batch.mean_episode_len(),
                    normalized_score: latest_score,
                    aborted: false,
                }
            }
            Err(CoreError::NonFinite(_)) => {
                policy.params = snapshot.0;
                value.params = snapshot.1;
                disc.params = snapshot.2;
                policy_adam = snapshot.3;
                value_adam = snapshot.4;
                disc_adam = snapshot.5;
                aborted_iterations += 1;
                MetricsRow {
                    iteration,
                    wall_clock_s,
                    disc_loss: f64::NAN,
                    mean_d_imitator: f64::NAN,
                    mean_d_expert: f64::NAN,
                    policy_loss: f64::NAN,
                    value_loss: f64::NAN,
                    entropy: f64::NAN,
                    clip_fraction: f64::NAN,
                    mean_true_return: batch.mean_true_return(),
                    mean_episode_len: batch.mean_episode_len(),
                    normalized_score: latest_score,
                    aborted: true,
                }
            }
            Err(e) => return Err(e.into()),
        };
        writer.append(&row)?;
    }
    Ok(ImitateOutcome {
        iterations: cfg.iterations,
        final_score: latest_score,
        best_score,
        aborted_iterations,
    })
}

/// Everything `evaluate` reports about one checkpoint.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub mean_return: f64,
    pub std_error: f64,
    pub normalized_score: f64,
    pub returns: Vec<f64>,
}

/// Scores a policy against an expert: mean return with its standard error,
/// and the return normalized so a fresh policy is 0 and the expert is 1.
pub fn evaluate(
    target: &GaussianPolicy,
    expert: &GaussianPolicy,
    env: EnvId,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport> {
    if episodes < 2 {
        return Err(AppError::Usage("--episodes must be at least 2".into()));
    }
    let returns = eval_returns(target, env, episodes, seed)?;
    let r_target = mean(&returns);
    let r_expert = mean(&eval_returns(expert, env, episodes, seed)?);
    let random = random_baseline_policy(target.mode(), env, seed)?;
    let r_random = mean(&eval_returns(&random, env, episodes, seed)?);
    Ok(EvalReport {
        mean_return: r_target,
        std_error: std_error(&returns),
        normalized_score: normalized_score(r_target, r_random, r_expert)?,
        returns,
    })
}
