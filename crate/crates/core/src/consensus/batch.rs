// SPDX-License-Identifier: Apache-2.0

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{ConfigError, SubmitError};
use crate::txflow::EndorsedTransaction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BatchPolicy {
    pub max_txs: usize,
    pub max_wait_ms: u64,
}

impl BatchPolicy {
    pub fn new(max_txs: usize, max_wait_ms: u64) -> Result<Self, ConfigError> {
        if max_txs == 0 {
            return Err(ConfigError::BatchPolicy("maxTxs must be at least 1".into()));
        }
        Ok(BatchPolicy { max_txs, max_wait_ms })
    }
}

impl Default for BatchPolicy {
    fn default() -> Self {
        BatchPolicy { max_txs: 10, max_wait_ms: 50 }
    }
}

/// FIFO pending pool with size- and time-triggered cuts. Remembers every txId
/// it ever accepted.
#[derive(Debug)]
pub struct BatchCutter {
    policy: BatchPolicy,
    pool: VecDeque<(EndorsedTransaction, u64)>,
    seen: HashSet<String>,
}

impl BatchCutter {
    pub fn new(policy: BatchPolicy) -> Self {
        BatchCutter { policy, pool: VecDeque::new(), seen: HashSet::new() }
    }

    pub fn policy(&self) -> BatchPolicy {
        self.policy
    }

    pub fn pending(&self) -> usize {
        self.pool.len()
    }

    /// Accepts a transaction; returns a full batch when the pool reaches
    /// `maxTxs`.
    pub fn submit(
        &mut self,
        tx: EndorsedTransaction,
        now_ms: u64,
    ) -> Result<Option<Vec<EndorsedTransaction>>, SubmitError> {
        if !tx.digests_consistent() {
            return Err(SubmitError::Malformed(tx.tx_id().to_string()));
        }
        if !self.seen.insert(tx.tx_id().to_string()) {
            return Err(SubmitError::Duplicate(tx.tx_id().to_string()));
        }
        self.pool.push_back((tx, now_ms));
        if self.pool.len() >= self.policy.max_txs {
            Ok(self.cut_batch())
        } else {
            Ok(None)
        }
    }

    /// Deadline of the oldest pending transaction.
    pub fn next_deadline(&self) -> Option<u64> {
        self.pool.front().map(|(_, t)| t + self.policy.max_wait_ms)
    }

    /// Timeout path: cuts when the oldest pending tx has waited `maxWaitMs`.
    pub fn poll(&mut self, now_ms: u64) -> Option<Vec<EndorsedTransaction>> {
        match self.next_deadline() {
            Some(deadline) if now_ms >= deadline => self.cut_batch(),
            _ => None,
        }
    }

    /// Removes up to `maxTxs` transactions in arrival order. Never returns an
    /// empty batch.
    pub fn cut_batch(&mut self) -> Option<Vec<EndorsedTransaction>> {
        if self.pool.is_empty() {
            return None;
        }
        let n = self.pool.len().min(self.policy.max_txs);
        Some(self.pool.drain(..n).map(|(tx, _)| tx).collect())
    }
}
