// SPDX-License-Identifier: Apache-2.0

//! A single-process peer: endorsers, an ordering engine and a committer over
//! one ledger.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{
    BatchPolicy, ConfigError, EngineKind, OrderedBatch, OrderingEngine, PbftCluster, SoloOrderer,
    SubmitError,
};
use crate::crypto::{sha256, KeyPair};
use crate::ledger::{Ledger, LedgerError};
use crate::txflow::{
    self, ChaincodeRegistry, CommitEvent, EndorseError, EndorsedTransaction, Endorser,
    EndorsementPolicy, PolicyConfigError, Transient, TxProposal, ValidationCode,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct NodeConfig {
    pub endorsers: usize,
    pub policy_k: usize,
    pub orderer: EngineKind,
    pub n: usize,
    pub f: usize,
    pub batch_max: usize,
    pub batch_wait_ms: u64,
    /// Seed for endorser and replica keys.
    pub key_seed: u64,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig {
            endorsers: 3,
            policy_k: 2,
            orderer: EngineKind::Solo,
            n: 4,
            f: 1,
            batch_max: 10,
            batch_wait_ms: 50,
            key_seed: 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum NodeError {
    #[error(transparent)]
    Endorse(#[from] EndorseError),
    #[error(transparent)]
    Submit(#[from] SubmitError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Policy(#[from] PolicyConfigError),
    #[error("endorsers returned differing read/write sets")]
    EndorsementMismatch,
    #[error("transaction {0} was not committed")]
    NotCommitted(String),
}

/// Where a transaction ended up.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TxOutcome {
    pub tx_id: String,
    pub height: u64,
    pub code: ValidationCode,
}

/// Deterministic endorser keys: SHA-256 of a label, the seed, and the index.
pub fn endorser_key(seed: u64, index: usize) -> KeyPair {
    let mut material = b"quebian-endorser".to_vec();
    material.extend_from_slice(&seed.to_le_bytes());
    material.extend_from_slice(&(index as u64).to_le_bytes());
    KeyPair::from_seed(*sha256(&material).as_bytes())
}

pub fn build_endorsers(seed: u64, count: usize) -> Vec<Endorser> {
    (0..count).map(|i| Endorser::new(format!("peer{i}"), endorser_key(seed, i))).collect()
}

pub fn build_engine(config: &NodeConfig) -> Result<Box<dyn OrderingEngine>, ConfigError> {
    let policy = BatchPolicy::new(config.batch_max, config.batch_wait_ms)?;
    Ok(match config.orderer {
        EngineKind::Solo => Box::new(SoloOrderer::new(policy)),
        EngineKind::Pbft => Box::new(PbftCluster::new(config.n, config.f, policy, config.key_seed)?),
    })
}

pub struct Node {
    ledger: Ledger,
    endorsers: Vec<Endorser>,
    policy: EndorsementPolicy,
    registry: ChaincodeRegistry,
    engine: Box<dyn OrderingEngine>,
    events: Vec<CommitEvent>,
}

impl Node {
    pub fn new(ledger: Ledger, config: &NodeConfig) -> Result<Self, NodeError> {
        let endorsers = build_endorsers(config.key_seed, config.endorsers);
        let policy = EndorsementPolicy::new(
            config.policy_k,
            endorsers.iter().map(|e| (e.id.clone(), e.public_key())),
        )?;
        Ok(Node {
            ledger,
            endorsers,
            policy,
            registry: ChaincodeRegistry::standard(),
            engine: build_engine(config)?,
            events: Vec::new(),
        })
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn policy(&self) -> &EndorsementPolicy {
        &self.policy
    }

    pub fn registry(&self) -> &ChaincodeRegistry {
        &self.registry
    }

    pub fn engine_id(&self) -> &'static str {
        self.engine.engine_id()
    }

    /// Commit events since the last call.
    pub fn take_events(&mut self) -> Vec<CommitEvent> {
        std::mem::take(&mut self.events)
    }

    /// Collects `k` endorsements on the current committed state.
    pub fn endorse(&self, proposal: TxProposal, transient: &Transient) -> Result<EndorsedTransaction, NodeError> {
        let mut rwset = None;
        let mut endorsements = Vec::new();
        for e in self.endorsers.iter().take(self.policy.k()) {
            let (rw, en) = e.endorse(&self.registry, &proposal, transient, self.ledger.state())?;
            match &rwset {
                None => rwset = Some(rw),
                Some(prev) if *prev != rw => return Err(NodeError::EndorsementMismatch),
                Some(_) => {}
            }
            endorsements.push(en);
        }
        Ok(EndorsedTransaction { proposal, rwset: rwset.expect("policy k >= 1"), endorsements })
    }

    pub fn submit(&mut self, tx: EndorsedTransaction, now_ms: u64) -> Result<(), NodeError> {
        self.engine.submit(tx, now_ms)?;
        self.commit_delivered()?;
        Ok(())
    }

    pub fn next_deadline(&self) -> Option<u64> {
        self.engine.next_deadline()
    }

    /// Advances the ordering engine's clock and commits whatever it delivers.
    pub fn tick(&mut self, now_ms: u64) -> Result<(), NodeError> {
        self.engine.tick(now_ms);
        self.commit_delivered()
    }

    /// Cuts any pending batch regardless of its age.
    pub fn flush(&mut self, now_ms: u64) -> Result<(), NodeError> {
        if let Some(deadline) = self.engine.next_deadline() {
            self.engine.tick(deadline.max(now_ms));
        }
        self.commit_delivered()
    }

    fn commit_delivered(&mut self) -> Result<(), NodeError> {
        for OrderedBatch { timestamp, txs, .. } in self.engine.take_delivered() {
            if let Some(ev) =
                txflow::validate_and_commit(&mut self.ledger, txs, &self.policy, &self.registry, timestamp)?
            {
                self.events.push(ev);
            }
        }
        Ok(())
    }

    /// Endorses, orders and commits one proposal immediately.
    pub fn execute(
        &mut self,
        proposal: TxProposal,
        transient: &Transient,
        now_ms: u64,
    ) -> Result<TxOutcome, NodeError> {
        let tx_id = proposal.tx_id.clone();
        let tx = self.endorse(proposal, transient)?;
        self.submit(tx, now_ms)?;
        self.flush(now_ms)?;
        self.outcome_of(&tx_id).ok_or(NodeError::NotCommitted(tx_id))
    }

    /// Looks up a committed transaction by id (newest blocks first).
    pub fn outcome_of(&self, tx_id: &str) -> Option<TxOutcome> {
        self.ledger.blocks().iter().rev().find_map(|b| {
            b.txs.iter().position(|t| t.tx_id() == tx_id).map(|i| TxOutcome {
                tx_id: tx_id.to_string(),
                height: b.header.height,
                code: b.validation[i],
            })
        })
    }
}
