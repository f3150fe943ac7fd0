//! Command-line interface: flag definitions and dispatch.
//!
//! Config precedence is defaults < `--config` file < flags (currently
//! `--seed` is the only hyperparameter flag). Bad invocations — unknown
//! environment or mode names, unreadable input files, invalid flag values —
//! exit with code 2 and a message naming the flag; runtime failures exit 1.

use std::path::{Path, PathBuf};

use clap::{ArgAction, Parser, Subcommand};
use pifo_core::env::EnvId;
use pifo_core::gfmt::format_g17;
use pifo_core::policy::Mode;
use pifo_core::rl::TrainConfig;

use crate::checkpoint::{load_policy, PolicyCheckpoint};
use crate::demo::{load_demos, save_demos};
use crate::error::{AppError, Result};
use crate::pipeline;

#[derive(Debug, Parser)]
#[command(
    name = "pifo",
    about = "Imitation from observation with proprioceptive policies",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Train an expert policy with PPO on the environment's true reward.
    TrainExpert {
        /// Environment id (cartpole-balance, mountain-car, point-mass).
        #[arg(long)]
        env: String,
        /// Hyperparameter file (key=value per line); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory to create.
        #[arg(long)]
        out: PathBuf,
        /// Run seed; overrides the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Roll out a trained policy and keep only the rendered frames.
    RecordDemos {
        /// Policy checkpoint to roll out.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Environment id; must match the checkpoint.
        #[arg(long)]
        env: String,
        /// Number of episodes to record.
        #[arg(long)]
        num_trajectories: usize,
        /// true = play the mean action, false = sample.
        #[arg(long, action = ArgAction::Set, default_value_t = true)]
        deterministic: bool,
        /// Demo file to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train an imitator from demonstration frames alone.
    Imitate {
        /// Demo file produced by record-demos.
        #[arg(long)]
        demos: PathBuf,
        /// Environment id; must match the demo file.
        #[arg(long)]
        env: String,
        /// Observation mode of the imitator: proprio or vision.
        #[arg(long)]
        mode: String,
        /// Hyperparameter file (key=value per line); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory to create.
        #[arg(long)]
        out: PathBuf,
        /// Run seed; overrides the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Expert checkpoint anchoring the normalized score; score columns
        /// are nan without it.
        #[arg(long)]
        expert_checkpoint: Option<PathBuf>,
    },
    /// Report a checkpoint's mean return, standard error, and normalized score.
    Evaluate {
        /// Policy checkpoint to score.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Expert checkpoint defining normalized score 1.
        #[arg(long)]
        expert_checkpoint: PathBuf,
        /// Environment id; must match both checkpoints.
        #[arg(long)]
        env: String,
        /// Evaluation episodes (at least 2).
        #[arg(long)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Aggregate run directories into SVG figures and a summary table.
    Report {
        /// Comma-separated run directories.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        run_dirs: Vec<PathBuf>,
        /// Output directory for curves.svg, bars.svg, summary.csv.
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_env(value: &str) -> Result<EnvId> {
    EnvId::parse(value).map_err(|_| {
        let all: Vec<&str> = EnvId::ALL.iter().map(|id| id.as_str()).collect();
        AppError::Usage(format!(
            "--env: unknown environment {value:?} (expected one of {})",
            all.join(", ")
        ))
    })
}

fn parse_mode(value: &str) -> Result<Mode> {
    Mode::parse(value).map_err(|_| {
        AppError::Usage(format!("--mode: expected proprio or vision, got {value:?}"))
    })
}

/// Defaults, overlaid with the config file, overlaid with the seed flag.
fn load_config(config: Option<&Path>, seed: Option<u64>) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = config {
        let text = std::fs::read_to_string(path).map_err(|e| {
            AppError::Usage(format!("--config: cannot read {}: {e}", path.display()))
        })?;
        cfg.apply_text(&text)
            .map_err(|e| AppError::Usage(format!("--config: {}: {e}", path.display())))?;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Loads a checkpoint, naming `flag` in usage errors, and checks that the
/// checkpoint was trained on `env`.
fn load_checkpoint_for(flag: &str, path: &Path, env: EnvId) -> Result<PolicyCheckpoint> {
    let ck = match load_policy(path) {
        Ok(ck) => ck,
        Err(AppError::Io { path, source }) => {
            return Err(AppError::Usage(format!(
                "{flag}: cannot read {}: {source}",
                path.display()
            )))
        }
        Err(e) => return Err(e),
    };
    if ck.env != env {
        return Err(AppError::Usage(format!(
            "{flag}: checkpoint was trained on {} but --env is {}",
            ck.env.as_str(),
            env.as_str()
        )));
    }
    Ok(ck)
}

/// Executes one parsed command, printing a short summary on success.
pub fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::TrainExpert { env, config, out, seed } => {
            let env = parse_env(&env)?;
            let cfg = load_config(config.as_deref(), seed)?;
            let outcome = pipeline::train_expert(env, &cfg, &out)?;
            println!(
                "trained {} for {} iterations; best mean return {}; run dir {}",
                env.as_str(),
                outcome.iterations,
                format_g17(outcome.best_return),
                out.display()
            );
            Ok(())
        }
        Cmd::RecordDemos { checkpoint, env, num_trajectories, deterministic, out, seed } => {
            let env = parse_env(&env)?;
            let ck = load_checkpoint_for("--checkpoint", &checkpoint, env)?;
            let set = pipeline::record_demos(&ck.policy, env, num_trajectories, deterministic, seed)?;
            save_demos(&set, &out)?;
            println!(
                "recorded {} trajectories ({} frames) on {} into {}",
                set.len(),
                set.total_frames(),
                env.as_str(),
                out.display()
            );
            Ok(())
        }
        Cmd::Imitate { demos, env, mode, config, out, seed, expert_checkpoint } => {
            let env = parse_env(&env)?;
            let mode = parse_mode(&mode)?;
            let cfg = load_config(config.as_deref(), seed)?;
            let set = match load_demos(&demos) {
                Ok(set) => set,
                Err(AppError::Io { path, source }) => {
                    return Err(AppError::Usage(format!(
                        "--demos: cannot read {}: {source}",
                        path.display()
                    )))
                }
                Err(e) => return Err(e),
            };
            let expert = match &expert_checkpoint {
                Some(path) => Some(load_checkpoint_for("--expert-checkpoint", path, env)?),
                None => None,
            };
            let outcome =
                pipeline::imitate(&set, env, mode, &cfg, &out, expert.as_ref().map(|c| &c.policy))?;
            println!(
                "imitated {} in {} mode for {} iterations; final normalized score {}; run dir {}",
                env.as_str(),
                mode.as_str(),
                outcome.iterations,
                format_g17(outcome.final_score),
                out.display()
            );
            Ok(())
        }
        Cmd::Evaluate { checkpoint, expert_checkpoint, env, episodes, seed } => {
            let env = parse_env(&env)?;
            if episodes < 2 {
                return Err(AppError::Usage("--episodes must be at least 2".into()));
            }
            let target = load_checkpoint_for("--checkpoint", &checkpoint, env)?;
            let expert = load_checkpoint_for("--expert-checkpoint", &expert_checkpoint, env)?;
            let rep = pipeline::evaluate(&target.policy, &expert.policy, env, episodes, seed)?;
            println!(
                "mean_return={} std_error={} normalized_score={}",
                format_g17(rep.mean_return),
                format_g17(rep.std_error),
                format_g17(rep.normalized_score)
            );
            Ok(())
        }
        Cmd::Report { run_dirs, out } => {
            crate::report::emit_report(&run_dirs, &out)?;
            println!(
                "reported {} run(s) into {} (curves.svg, bars.svg, summary.csv)",
                run_dirs.len(),
                out.display()
            );
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(args)
    }

    #[test]
    fn subcommands_parse_their_documented_flags() {
        let cli = parse(&[
            "pifo",
            "train-expert",
            "--env",
            "cartpole-balance",
            "--config",
            "c.txt",
            "--out",
            "runs/e1",
            "--seed",
            "7",
        ])
        .unwrap();
        match cli.cmd {
            Cmd::TrainExpert { env, config, out, seed } => {
                assert_eq!(env, "cartpole-balance");
                assert_eq!(config.unwrap(), PathBuf::from("c.txt"));
                assert_eq!(out, PathBuf::from("runs/e1"));
                assert_eq!(seed, Some(7));
            }
            other => panic!("wrong command: {other:?}"),
        }

        let cli = parse(&[
            "pifo",
            "record-demos",
            "--checkpoint",
            "best.pifo",
            "--env",
            "point-mass",
            "--num-trajectories",
            "10",
            "--deterministic",
            "false",
            "--out",
            "d.demo",
            "--seed",
            "3",
        ])
        .unwrap();
        match cli.cmd {
            Cmd::RecordDemos { num_trajectories, deterministic, .. } => {
                assert_eq!(num_trajectories, 10);
                assert!(!deterministic);
            }
            other => panic!("wrong command: {other:?}"),
        }

        let cli = parse(&[
            "pifo",
            "imitate",
            "--demos",
            "d.demo",
            "--env",
            "point-mass",
            "--mode",
            "vision",
            "--out",
            "runs/i1",
        ])
        .unwrap();
        match cli.cmd {
            Cmd::Imitate { mode, expert_checkpoint, config, seed, .. } => {
                assert_eq!(mode, "vision");
                assert!(expert_checkpoint.is_none());
                assert!(config.is_none());
                assert!(seed.is_none());
            }
            other => panic!("wrong command: {other:?}"),
        }

        let cli = parse(&[
            "pifo",
            "report",
            "--run-dirs",
            "runs/a,runs/b",
            "--out",
            "rep",
        ])
        .unwrap();
        match cli.cmd {
            Cmd::Report { run_dirs, .. } => {
                assert_eq!(run_dirs, vec![PathBuf::from("runs/a"), PathBuf::from("runs/b")]);
            }
            other => panic!("wrong command: {other:?}"),
        }
    }

    #[test]
    fn missing_required_flags_name_the_flag_and_exit_2() {
        let err = parse(&["pifo", "train-expert", "--out", "x"]).unwrap_err();
        assert!(err.to_string().contains("--env"), "{err}");
        assert_eq!(err.exit_code(), 2);

        let err = parse(&["pifo", "evaluate", "--checkpoint", "a", "--env", "b", "--episodes", "4"])
            .unwrap_err();
        assert!(err.to_string().contains("--expert-checkpoint"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_env_and_mode_are_usage_errors_listing_choices() {
        let err = parse_env("cart-pole").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let msg = err.to_string();
        assert!(msg.contains("--env"), "{msg}");
        assert!(msg.contains("cartpole-balance") && msg.contains("point-mass"), "{msg}");

        let err = parse_mode("visual").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let msg = err.to_string();
        assert!(msg.contains("--mode") && msg.contains("proprio") && msg.contains("vision"));
        assert!(msg.contains("visual"), "{msg}");
    }

    #[test]
    fn config_precedence_is_defaults_file_flag() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        std::fs::write(&path, "gamma=0.9\nseed=5\n").unwrap();

        let cfg = load_config(None, None).unwrap();
        assert_eq!(cfg, TrainConfig::default());

        let cfg = load_config(Some(&path), None).unwrap();
        assert_eq!(cfg.gamma, 0.9);
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.minibatch, TrainConfig::default().minibatch);

        let cfg = load_config(Some(&path), Some(9)).unwrap();
        assert_eq!(cfg.seed, 9, "the flag must override the file");
        assert_eq!(cfg.gamma, 0.9);

        let err = load_config(Some(&dir.path().join("absent.txt")), None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("--config"), "{err}");

        std::fs::write(&path, "not_a_key=1\n").unwrap();
        let err = load_config(Some(&path), None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn missing_input_files_are_usage_errors_naming_the_flag() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_checkpoint_for(
            "--checkpoint",
            &dir.path().join("absent.pifo"),
            EnvId::PointMass,
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("--checkpoint"), "{err}");
    }

    #[test]
    fn checkpoint_env_mismatch_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.pifo");
        let policy = pipeline::random_baseline_policy(Mode::Proprio, EnvId::PointMass, 1).unwrap();
        crate::checkpoint::save_policy(&policy, EnvId::PointMass, &path).unwrap();
        let err = load_checkpoint_for("--checkpoint", &path, EnvId::MountainCar).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let msg = err.to_string();
        assert!(msg.contains("point-mass") && msg.contains("mountain-car"), "{msg}");
    }
}
