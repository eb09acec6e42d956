// SPDX-License-Identifier: Apache-2.0

//! Execute-order-validate transaction flow.
//!
//! Endorsers simulate a proposal against a read-only snapshot and sign the
//! resulting read/write set. Ordered transactions are then validated in block
//! order: client signature, function, endorsement policy, and finally MVCC
//! read-version checks against committed state plus the writes of earlier
//! VALID transactions in the same block.

mod chaincode;
mod types;
pub mod oracle;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chaincode::{ChaincodeError, ChaincodeFn, ChaincodeRegistry, RejectKind, TxContext};
pub use types::{
    transient_digest, Endorsement, EndorsedTransaction, ReadEntry, ReadWriteSet, Transient,
    TxProposal, ValidationCode, WriteEntry,
};

use crate::crypto::{KeyPair, PublicKey};
use crate::identity;
use crate::ledger::{Block, Ledger, LedgerError, Version, WorldState};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EndorseError {
    #[error("client signature does not verify for {0}")]
    BadSignature(String),
    #[error("unknown chaincode function {0}")]
    BadFunction(String),
    #[error("transient data does not match the signed digest")]
    TransientMismatch,
    #[error("chaincode refused: {0}")]
    Chaincode(#[from] ChaincodeError),
}

/// Resolves the key that must have signed `proposal`. A `register_did`
/// proposal whose submitter is the DID being registered is self-signed with
/// the key it carries.
pub fn submitter_key<'a>(
    proposal: &TxProposal,
    lookup: impl Fn(&str) -> Option<&'a [u8]>,
) -> Option<PublicKey> {
    if let Some(key) = identity::lookup_did_key(&proposal.submitter_did, &lookup) {
        return Some(key);
    }
    if proposal.function == identity::REGISTER_DID
        && proposal.args.first() == Some(&proposal.submitter_did)
    {
        return proposal.args.get(1).and_then(|k| PublicKey::from_hex(k));
    }
    None
}

/// A peer holding an endorsement key.
#[derive(Clone, Debug)]
pub struct Endorser {
    pub id: String,
    key: KeyPair,
}

impl Endorser {
    pub fn new(id: impl Into<String>, key: KeyPair) -> Self {
        Endorser { id: id.into(), key }
    }

    pub fn public_key(&self) -> PublicKey {
        self.key.public()
    }

    /// Simulates `proposal` against `snapshot` and signs the resulting rwset
    /// digest. Never mutates the snapshot.
    pub fn endorse(
        &self,
        registry: &ChaincodeRegistry,
        proposal: &TxProposal,
        transient: &Transient,
        snapshot: &WorldState,
    ) -> Result<(ReadWriteSet, Endorsement), EndorseError> {
        let rwset = simulate(registry, proposal, transient, snapshot)?;
        let endorsement = Endorsement::sign(self.id.clone(), rwset.digest(), &self.key);
        Ok((rwset, endorsement))
    }
}

/// Runs the chaincode function named by `proposal` and returns its rwset.
/// Shared by endorsers and by the serial order-execute baseline.
pub fn simulate(
    registry: &ChaincodeRegistry,
    proposal: &TxProposal,
    transient: &Transient,
    snapshot: &WorldState,
) -> Result<ReadWriteSet, EndorseError> {
    let key = submitter_key(proposal, |k| snapshot.get(k).map(|v| v.value.as_slice()))
        .ok_or_else(|| EndorseError::BadSignature(proposal.submitter_did.clone()))?;
    if !proposal.verify_signature(&key) {
        return Err(EndorseError::BadSignature(proposal.submitter_did.clone()));
    }
    if transient_digest(transient) != proposal.transient_digest {
        return Err(EndorseError::TransientMismatch);
    }
    let f = registry
        .get(&proposal.function)
        .ok_or_else(|| EndorseError::BadFunction(proposal.function.clone()))?;
    let mut ctx = TxContext::new(snapshot, proposal, transient);
    f(&mut ctx)?;
    Ok(ctx.into_rwset())
}

/// k-of-n endorsement policy over a fixed set of endorser keys.
#[derive(Clone, Debug)]
pub struct EndorsementPolicy {
    k: usize,
    endorsers: BTreeMap<String, PublicKey>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("endorsement policy needs 1 <= k <= {n}, got k = {k}")]
pub struct PolicyConfigError {
    pub k: usize,
    pub n: usize,
}

impl EndorsementPolicy {
    pub fn new(
        k: usize,
        endorsers: impl IntoIterator<Item = (String, PublicKey)>,
    ) -> Result<Self, PolicyConfigError> {
        let endorsers: BTreeMap<_, _> = endorsers.into_iter().collect();
        if k == 0 || k > endorsers.len() {
            return Err(PolicyConfigError { k, n: endorsers.len() });
        }
        Ok(EndorsementPolicy { k, endorsers })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn endorser_ids(&self) -> impl Iterator<Item = &str> {
        self.endorsers.keys().map(String::as_str)
    }
}

/// Passes iff every endorsement comes from an authorized endorser, carries a
/// valid signature over the tx's rwset digest, and at least `k` distinct
/// endorsers signed.
pub fn check_endorsement_policy(tx: &EndorsedTransaction, policy: &EndorsementPolicy) -> bool {
    if !tx.rwset.is_well_formed() {
        return false;
    }
    let digest = tx.rwset.digest();
    let mut signers = BTreeSet::new();
    for e in &tx.endorsements {
        let Some(key) = policy.endorsers.get(&e.endorser_id) else {
            return false;
        };
        if e.rwset_digest != digest || !e.verify(key) {
            return false;
        }
        signers.insert(e.endorser_id.as_str());
    }
    signers.len() >= policy.k
}

/// Assigns a validation code to each transaction, in order. The first failing
/// check wins: BAD_SIGNATURE, BAD_FUNCTION, ENDORSEMENT_POLICY_FAILURE,
/// MVCC_CONFLICT.
pub fn validate_block(
    txs: &[EndorsedTransaction],
    committed: &WorldState,
    policy: &EndorsementPolicy,
    registry: &ChaincodeRegistry,
    height: u64,
) -> Vec<ValidationCode> {
    // Writes of earlier VALID txs in this block.
    let mut overlay: BTreeMap<&str, (&[u8], Version)> = BTreeMap::new();
    let mut codes = Vec::with_capacity(txs.len());
    for (i, tx) in txs.iter().enumerate() {
        let lookup = |k: &str| match overlay.get(k) {
            Some((v, _)) => Some(*v),
            None => committed.get(k).map(|v| v.value.as_slice()),
        };
        let code = if !submitter_key(&tx.proposal, lookup)
            .is_some_and(|key| tx.proposal.verify_signature(&key))
        {
            ValidationCode::BadSignature
        } else if !registry.contains(&tx.proposal.function) {
            ValidationCode::BadFunction
        } else if !check_endorsement_policy(tx, policy) {
            ValidationCode::EndorsementPolicyFailure
        } else if tx.rwset.reads.iter().any(|r| {
            let current = match overlay.get(r.key.as_str()) {
                Some((_, v)) => Some(*v),
                None => committed.version_of(&r.key),
            };
            current != r.version
        }) {
            ValidationCode::MvccConflict
        } else {
            ValidationCode::Valid
        };
        if code == ValidationCode::Valid {
            let version = Version::new(height, i as u32);
            for w in &tx.rwset.writes {
                overlay.insert(w.key.as_str(), (w.value.as_slice(), version));
            }
        }
        codes.push(code);
    }
    codes
}

/// Emitted after every committed block; one canonical-JSON line on the event
/// stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CommitEvent {
    pub height: u64,
    pub tx_ids: Vec<String>,
    pub codes: Vec<ValidationCode>,
}

impl CommitEvent {
    pub fn to_json_line(&self) -> String {
        String::from_utf8(crate::codec::canonical_bytes(self)).expect("canonical JSON is UTF-8")
    }
}

/// Builds the block for `txs` with their codes and appends it. Empty batches
/// produce no block.
pub fn commit_block(
    ledger: &mut Ledger,
    txs: Vec<EndorsedTransaction>,
    codes: Vec<ValidationCode>,
    timestamp: u64,
) -> Result<Option<CommitEvent>, LedgerError> {
    if txs.is_empty() {
        return Ok(None);
    }
    let header = ledger.next_header(&txs, timestamp);
    let tx_ids = txs.iter().map(|t| t.tx_id().to_string()).collect();
    let block = Block { header, txs, validation: codes.clone() };
    let height = ledger.append_block(block)?;
    Ok(Some(CommitEvent { height, tx_ids, codes }))
}

/// Validates an ordered batch against the ledger's committed state and
/// commits it.
pub fn validate_and_commit(
    ledger: &mut Ledger,
    txs: Vec<EndorsedTransaction>,
    policy: &EndorsementPolicy,
    registry: &ChaincodeRegistry,
    timestamp: u64,
) -> Result<Option<CommitEvent>, LedgerError> {
    let codes = validate_block(&txs, ledger.state(), policy, registry, ledger.height() + 1);
    commit_block(ledger, txs, codes, timestamp)
}

#[cfg(test)]
mod tests;
