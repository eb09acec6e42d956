// SPDX-License-Identifier: Apache-2.0

use super::{BatchCutter, BatchPolicy, OrderedBatch, OrderingEngine, SubmitError};
use crate::txflow::EndorsedTransaction;

/// Single logical sequencer: crash-fault trust model, FIFO batches.
#[derive(Debug)]
pub struct SoloOrderer {
    cutter: BatchCutter,
    next_seq: u64,
    delivered: Vec<OrderedBatch>,
}

impl SoloOrderer {
    pub fn new(policy: BatchPolicy) -> Self {
        SoloOrderer { cutter: BatchCutter::new(policy), next_seq: 1, delivered: Vec::new() }
    }

    fn emit(&mut self, txs: Vec<EndorsedTransaction>, now_ms: u64) {
        self.delivered.push(OrderedBatch { seq: self.next_seq, timestamp: now_ms, txs });
        self.next_seq += 1;
    }
}

impl OrderingEngine for SoloOrderer {
    fn engine_id(&self) -> &'static str {
        "solo"
    }

    fn submit(&mut self, tx: EndorsedTransaction, now_ms: u64) -> Result<(), SubmitError> {
        if let Some(batch) = self.cutter.submit(tx, now_ms)? {
            self.emit(batch, now_ms);
        }
        Ok(())
    }

    fn tick(&mut self, now_ms: u64) {
        if let Some(batch) = self.cutter.poll(now_ms) {
            self.emit(batch, now_ms);
        }
    }

    fn next_deadline(&self) -> Option<u64> {
        self.cutter.next_deadline()
    }

    fn take_delivered(&mut self) -> Vec<OrderedBatch> {
        std::mem::take(&mut self.delivered)
    }
}
