// SPDX-License-Identifier: Apache-2.0

//! Serial re-execution oracle. Walks committed transactions one at a time in
//! ledger order, re-runs each chaincode call against a live state, and
//! accepts a transaction iff the reads it was endorsed with are still
//! current. Used to check the pipelined validator.

use std::collections::{BTreeSet, HashMap};

use super::{simulate, ChaincodeRegistry, EndorsedTransaction, Transient, ValidationCode};
use crate::ledger::{Block, Version, WorldState};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OracleReport {
    /// txIds the oracle accepted.
    pub accepted: BTreeSet<String>,
    /// txIds the pipeline flagged VALID.
    pub pipeline_valid: BTreeSet<String>,
    /// Accepted txs whose re-execution produced a different rwset.
    pub divergent_rwsets: Vec<String>,
    pub states_equal: bool,
}

impl OracleReport {
    pub fn mismatches(&self) -> usize {
        self.accepted.symmetric_difference(&self.pipeline_valid).count()
            + self.divergent_rwsets.len()
            + usize::from(!self.states_equal)
    }
}

pub struct SerialOracle<'a> {
    registry: &'a ChaincodeRegistry,
    state: WorldState,
}

impl<'a> SerialOracle<'a> {
    pub fn new(registry: &'a ChaincodeRegistry, initial: WorldState) -> Self {
        SerialOracle { registry, state: initial }
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    /// Decides one transaction at `version`. Returns (accepted, rwset of the
    /// re-execution matched the endorsed one).
    pub fn step(&mut self, tx: &EndorsedTransaction, transient: &Transient, version: Version) -> (bool, bool) {
        let current = tx.rwset.reads.iter().all(|r| self.state.version_of(&r.key) == r.version);
        if !current {
            return (false, true);
        }
        match simulate(self.registry, &tx.proposal, transient, &self.state) {
            Ok(rwset) => {
                self.state.apply_writes(&rwset.writes, version);
                (true, rwset == tx.rwset)
            }
            Err(_) => (false, true),
        }
    }

    /// Replays `blocks` (excluding any before `from_height`) and compares
    /// with the pipeline's flags and `final_state`.
    pub fn check(
        mut self,
        blocks: &[Block],
        from_height: u64,
        transients: &HashMap<String, Transient>,
        final_state: &WorldState,
    ) -> OracleReport {
        let empty = Transient::new();
        let mut report = OracleReport::default();
        for b in blocks.iter().filter(|b| b.header.height >= from_height) {
            for (i, (tx, code)) in b.txs.iter().zip(&b.validation).enumerate() {
                let t = transients.get(tx.tx_id()).unwrap_or(&empty);
                let (ok, same) = self.step(tx, t, Version::new(b.header.height, i as u32));
                if ok {
                    report.accepted.insert(tx.tx_id().to_string());
                    if !same {
                        report.divergent_rwsets.push(tx.tx_id().to_string());
                    }
                }
                if *code == ValidationCode::Valid {
                    report.pipeline_valid.insert(tx.tx_id().to_string());
                }
            }
        }
        report.states_equal = self.state.canonical_dump() == final_state.canonical_dump();
        report
    }
}
