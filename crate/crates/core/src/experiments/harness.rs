//! Replica execution: a bounded worker pool, per-replica seeds and panic
//! isolation. Results come back in replica order whatever the pool size.

use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clocks::substream_seed;

/// Environment variable bounding the worker pool.
pub const THREADS_ENV: &str = "VRJP_LAB_THREADS";

/// Seed of replica `i` under `master`.
pub fn replica_seed(master: u64, i: usize) -> u64 {
    substream_seed(master, &format!("replica/{i}"))
}

/// Worker count from [`THREADS_ENV`], or `None` to use every core.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplicaOutcome<T> {
    Ok(T),
    Failed(String),
}

impl<T> ReplicaOutcome<T> {
    pub fn ok(&self) -> Option<&T> {
        match self {
            ReplicaOutcome::Ok(v) => Some(v),
            ReplicaOutcome::Failed(_) => None,
        }
    }
}

/// Runs `f(i, seed_i)` for `i in 0..n` on `threads` workers.
///
/// A replica that returns an error or panics is recorded as failed; the rest
/// of the ensemble still runs.
pub fn run_replicas<T, E, F>(n: usize, master: u64, threads: Option<usize>, f: F) -> Vec<ReplicaOutcome<T>>
where
    T: Send,
    E: std::fmt::Display,
    F: Fn(usize, u64) -> Result<T, E> + Sync,
{
    let job = |i: usize| {
        let seed = replica_seed(master, i);
        match catch_unwind(AssertUnwindSafe(|| f(i, seed))) {
            Ok(Ok(v)) => ReplicaOutcome::Ok(v),
            Ok(Err(e)) => ReplicaOutcome::Failed(e.to_string()),
            Err(payload) => {
                let msg = payload
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| payload.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "unknown panic".into());
                ReplicaOutcome::Failed(format!("panic: {msg}"))
            }
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    match builder.build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(job).collect()),
        Err(_) => (0..n).map(job).collect(),
    }
}
