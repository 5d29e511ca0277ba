//! Scenario simulation: deterministic configs, workload generation, a
//! round-based network runner, metrics, and throughput trends. A run is a
//! pure function of its configuration file; repeat runs are byte-identical.

pub mod config;
pub mod metrics;
pub mod runner;
pub mod trend;
pub mod workload;

pub use config::{Config, ConfigError, WorkloadKind};
pub use runner::{run, RunOutput, TxRecord};
pub use workload::Workload;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::crypto::hash;

/// A labelled random substream of the scenario seed. Streams are independent
/// of each other, so adding draws to one never perturbs another.
pub(crate) fn stream(seed: u64, label: &[u8]) -> ChaCha20Rng {
    let mut payload = seed.to_be_bytes().to_vec();
    payload.extend_from_slice(label);
    ChaCha20Rng::from_seed(hash("rng-stream", &payload).0)
}
