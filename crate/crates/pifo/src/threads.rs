//! Optional thread-parallel rollout collection.
//!
//! `PIFO_THREADS` caps how many OS threads collect environment steps. Every
//! worker owns its RNG streams and its step quota is fixed up front by
//! `worker_quotas`, so how workers are grouped onto threads cannot change a
//! single byte of the collected batch — parallelism buys wall-clock time
//! only. The default is 1 thread.

use pifo_core::policy::{GaussianPolicy, ValueNet};
use pifo_core::rl::{collect_rollout, collect_worker, worker_quotas, RewardSource, RolloutBatch, Worker};
use pifo_core::CoreError;

use crate::error::{AppError, Result};

pub const THREADS_VAR: &str = "PIFO_THREADS";

/// Reads `PIFO_THREADS`; unset means 1, anything but a positive integer is
/// a usage error.
pub fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_VAR) {
        Err(std::env::VarError::NotPresent) => Ok(1),
        Err(std::env::VarError::NotUnicode(_)) => {
            Err(AppError::Usage(format!("{THREADS_VAR} must be a positive integer")))
        }
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| {
                AppError::Usage(format!("{THREADS_VAR} must be a positive integer, got {s:?}"))
            }),
    }
}

/// Collects a rollout, spreading workers over at most `threads` OS threads.
///
/// Identical output to the sequential path for any thread count: quotas are
/// computed over all workers first and the per-worker batches are merged in
/// worker order.
pub fn collect_rollout_threaded(
    policy: &GaussianPolicy,
    value: &ValueNet,
    workers: &mut [Worker],
    steps: usize,
    reward_source: RewardSource,
    threads: usize,
) -> std::result::Result<RolloutBatch, CoreError> {
    if threads <= 1 || workers.len() <= 1 || steps == 0 {
        return collect_rollout(policy, value, workers, steps, reward_source);
    }
    let quotas = worker_quotas(steps, workers.len());
    let group_size = workers.len().div_ceil(threads);
    let groups: Vec<(&mut [Worker], &[usize])> = workers
        .chunks_mut(group_size)
        .zip(quotas.chunks(group_size))
        .collect();
    let results: Vec<std::result::Result<RolloutBatch, CoreError>> =
        std::thread::scope(|scope| {
            let handles: Vec<_> = groups
                .into_iter()
                .map(|(group, group_quotas)| {
                    scope.spawn(move || {
                        let mut local = RolloutBatch::empty(policy.mode());
                        for (worker, &quota) in group.iter_mut().zip(group_quotas) {
                            let sub =
                                collect_worker(policy, value, worker, quota, reward_source)?;
                            local.append(sub)?;
                        }
                        Ok(local)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("rollout thread panicked")).collect()
        });
    let mut batch = RolloutBatch::empty(policy.mode());
    for res in results {
        batch.append(res?)?;
    }
    batch.check()?;
    Ok(batch)
}
