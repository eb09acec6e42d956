// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fmt;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use super::types::{ReadWriteSet, Transient, TxProposal};
use crate::codec::canonical_bytes;
use crate::ledger::{Version, WorldState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectKind {
    Auth,
    Consent,
    NotFound,
    Conflict,
    BadRequest,
}

/// A chaincode-level refusal to endorse.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{kind:?}: {message}")]
pub struct ChaincodeError {
    pub kind: RejectKind,
    pub message: String,
}

impl ChaincodeError {
    pub fn new(kind: RejectKind, message: impl Into<String>) -> Self {
        ChaincodeError { kind, message: message.into() }
    }
    pub fn auth(m: impl Into<String>) -> Self {
        Self::new(RejectKind::Auth, m)
    }
    pub fn consent(m: impl Into<String>) -> Self {
        Self::new(RejectKind::Consent, m)
    }
    pub fn not_found(m: impl Into<String>) -> Self {
        Self::new(RejectKind::NotFound, m)
    }
    pub fn conflict(m: impl Into<String>) -> Self {
        Self::new(RejectKind::Conflict, m)
    }
    pub fn bad_request(m: impl Into<String>) -> Self {
        Self::new(RejectKind::BadRequest, m)
    }
}

/// Execution context for one simulated chaincode invocation. Reads go to the
/// committed snapshot and are recorded with the version seen; writes are
/// buffered into the write set and never touch the snapshot.
pub struct TxContext<'a> {
    snapshot: &'a WorldState,
    proposal: &'a TxProposal,
    transient: &'a Transient,
    reads: BTreeMap<String, Option<Version>>,
    writes: BTreeMap<String, Vec<u8>>,
}

impl<'a> TxContext<'a> {
    pub fn new(snapshot: &'a WorldState, proposal: &'a TxProposal, transient: &'a Transient) -> Self {
        TxContext { snapshot, proposal, transient, reads: BTreeMap::new(), writes: BTreeMap::new() }
    }

    pub fn tx_id(&self) -> &str {
        &self.proposal.tx_id
    }

    pub fn submitter(&self) -> &str {
        &self.proposal.submitter_did
    }

    pub fn args(&self) -> &[String] {
        &self.proposal.args
    }

    pub fn arg(&self, i: usize) -> Result<&str, ChaincodeError> {
        self.proposal
            .args
            .get(i)
            .map(String::as_str)
            .ok_or_else(|| ChaincodeError::bad_request(format!("missing argument {i}")))
    }

    pub fn arg_json<T: DeserializeOwned>(&self, i: usize) -> Result<T, ChaincodeError> {
        serde_json::from_str(self.arg(i)?)
            .map_err(|e| ChaincodeError::bad_request(format!("argument {i}: {e}")))
    }

    pub fn transient(&self, key: &str) -> Option<&str> {
        self.transient.get(key).map(String::as_str)
    }

    pub fn get_state(&mut self, key: &str) -> Option<Vec<u8>> {
        let entry = self.snapshot.get(key);
        self.reads.entry(key.to_string()).or_insert(entry.map(|e| e.version));
        entry.map(|e| e.value.clone())
    }

    pub fn get_json<T: DeserializeOwned>(&mut self, key: &str) -> Result<Option<T>, ChaincodeError> {
        match self.get_state(key) {
            None => Ok(None),
            Some(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| ChaincodeError::bad_request(format!("stored value at {key}: {e}"))),
        }
    }

    /// Range read over committed keys; each returned key enters the read set
    /// individually (phantoms are not tracked).
    pub fn scan_prefix(&mut self, prefix: &str) -> Vec<(String, Vec<u8>)> {
        let hits: Vec<(String, Vec<u8>, Version)> = self
            .snapshot
            .scan_prefix(prefix)
            .map(|(k, v)| (k.to_string(), v.value.clone(), v.version))
            .collect();
        hits.into_iter()
            .map(|(k, value, version)| {
                self.reads.entry(k.clone()).or_insert(Some(version));
                (k, value)
            })
            .collect()
    }

    pub fn put_state(&mut self, key: impl Into<String>, value: Vec<u8>) {
        self.writes.insert(key.into(), value);
    }

    pub fn put_json<T: Serialize>(&mut self, key: impl Into<String>, value: &T) {
        self.put_state(key, canonical_bytes(value));
    }

    pub fn into_rwset(self) -> ReadWriteSet {
        ReadWriteSet::from_maps(self.reads, self.writes)
    }
}

pub type ChaincodeFn = fn(&mut TxContext<'_>) -> Result<(), ChaincodeError>;

/// Table of invocable chaincode functions.
#[derive(Clone, Default)]
pub struct ChaincodeRegistry {
    fns: BTreeMap<&'static str, ChaincodeFn>,
}

impl ChaincodeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Identity and EHR functions.
    pub fn standard() -> Self {
        let mut r = Self::new();
        crate::identity::register_chaincode(&mut r);
        crate::ehr::register_chaincode(&mut r);
        r
    }

    pub fn register(&mut self, name: &'static str, f: ChaincodeFn) {
        self.fns.insert(name, f);
    }

    pub fn get(&self, name: &str) -> Option<ChaincodeFn> {
        self.fns.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.fns.contains_key(name)
    }

    pub fn function_names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.fns.keys().copied()
    }
}

impl fmt::Debug for ChaincodeRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.fns.keys()).finish()
    }
}
