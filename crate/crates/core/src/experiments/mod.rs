//! Monte Carlo harness: replica ensembles, line detectors, ensemble checks
//! and self-verifying verdicts.

pub mod config;
pub mod detect;
pub mod harness;
pub mod run;
pub mod verdict;

pub use config::{ExperimentConfig, ExperimentKind};
pub use harness::{replica_seed, run_replicas, threads_from_env, ReplicaOutcome, THREADS_ENV};
pub use run::{run_experiment, verify, ExperimentError};
pub use verdict::{Check, Comparison, ReplicaRecord, Verdict};
