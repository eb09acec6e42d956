// SPDX-License-Identifier: Apache-2.0

//! Pluggable ordering service. An engine accepts endorsed transactions and
//! emits a gap-free, totally ordered sequence of batches; each batch becomes
//! one block after validation.

mod batch;
pub mod pbft;
mod solo;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use batch::{BatchCutter, BatchPolicy};
pub use pbft::{replica_key, Behavior, Outbound, PbftCluster, PbftKind, PbftMessage, PbftReplica};
pub use solo::SoloOrderer;

use crate::codec::canonical_bytes;
use crate::crypto::{sha256, Hash};
use crate::txflow::EndorsedTransaction;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SubmitError {
    #[error("duplicate transaction id {0}")]
    Duplicate(String),
    #[error("transaction {0} is malformed: endorsement digests do not match its rwset")]
    Malformed(String),
    #[error("this replica does not accept client submissions")]
    NotPrimary,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("PBFT needs n >= 3f + 1 (n = {n}, f = {f})")]
    TooFewReplicas { n: usize, f: usize },
    #[error("invalid batch policy: {0}")]
    BatchPolicy(String),
}

/// Size of a PBFT quorum: `2f + 1`, valid only when `n >= 3f + 1`.
pub fn quorum_size(n: usize, f: usize) -> Result<usize, ConfigError> {
    if n < 3 * f + 1 {
        return Err(ConfigError::TooFewReplicas { n, f });
    }
    Ok(2 * f + 1)
}

/// One unit of agreement. The timestamp is fixed by the orderer that cut the
/// batch so every node builds a byte-identical block from it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct OrderedBatch {
    pub seq: u64,
    pub timestamp: u64,
    pub txs: Vec<EndorsedTransaction>,
}

impl OrderedBatch {
    pub fn digest(&self) -> Hash {
        sha256(&canonical_bytes(self))
    }
}

/// The ordering contract shared by every engine.
pub trait OrderingEngine: Send {
    fn engine_id(&self) -> &'static str;

    /// Adds a transaction to the pending pool. Each txId is accepted once.
    fn submit(&mut self, tx: EndorsedTransaction, now_ms: u64) -> Result<(), SubmitError>;

    /// Advances timers; cuts a batch if the oldest pending tx has waited
    /// long enough.
    fn tick(&mut self, now_ms: u64);

    /// Earliest time at which `tick` could cut a batch.
    fn next_deadline(&self) -> Option<u64>;

    /// Batches ordered since the last call, in sequence order.
    fn take_delivered(&mut self) -> Vec<OrderedBatch>;
}

/// Engine selection as exposed on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Solo,
    Pbft,
}

impl std::str::FromStr for EngineKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "solo" => Ok(EngineKind::Solo),
            "pbft" => Ok(EngineKind::Pbft),
            other => Err(format!("unknown orderer {other:?} (expected solo or pbft)")),
        }
    }
}
