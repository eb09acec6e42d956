// SPDX-License-Identifier: Apache-2.0

//! Normal-case PBFT (no view change).
//!
//! ```text
//! primary:  cut batch -> PRE_PREPARE(v, n, d, batch)
//! backup:   accept PRE_PREPARE -> PREPARE(v, n, d)
//! prepared: PRE_PREPARE + 2f PREPAREs from distinct backups (own included)
//!           -> COMMIT(v, n, d)
//! commit:   prepared + 2f+1 COMMITs (own included) -> deliver in seq order
//! ```
//!
//! A replica is a single-threaded state machine: every input returns the
//! messages it wants sent, and delivered batches accumulate until taken.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{quorum_size, BatchCutter, BatchPolicy, ConfigError, OrderedBatch, OrderingEngine, SubmitError};
use crate::codec::canonical_bytes;
use crate::crypto::{Hash, KeyPair, PublicKey, Signature};
use crate::txflow::EndorsedTransaction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PbftKind {
    PrePrepare,
    Prepare,
    Commit,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PbftMessage {
    pub kind: PbftKind,
    pub view: u64,
    pub seq: u64,
    pub batch_digest: Hash,
    pub sender_id: usize,
    pub signature: Signature,
    /// Present on PRE_PREPARE only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<OrderedBatch>,
}

impl PbftMessage {
    fn signing_bytes(kind: PbftKind, view: u64, seq: u64, digest: &Hash, sender: usize) -> Vec<u8> {
        canonical_bytes(&json!({
            "batchDigest": digest,
            "kind": kind,
            "senderId": sender,
            "seq": seq,
            "view": view,
        }))
    }

    pub fn new_signed(
        kind: PbftKind,
        view: u64,
        seq: u64,
        batch_digest: Hash,
        sender_id: usize,
        key: &KeyPair,
        batch: Option<OrderedBatch>,
    ) -> Self {
        let signature = key.sign(&Self::signing_bytes(kind, view, seq, &batch_digest, sender_id));
        PbftMessage { kind, view, seq, batch_digest, sender_id, signature, batch }
    }

    pub fn verify(&self, key: &PublicKey) -> bool {
        key.verify(
            &Self::signing_bytes(self.kind, self.view, self.seq, &self.batch_digest, self.sender_id),
            &self.signature,
        )
    }
}

/// What a replica wants sent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outbound {
    /// To every other replica.
    Broadcast(PbftMessage),
    /// To one replica.
    Send { to: usize, msg: PbftMessage },
}

/// Fault behaviour, for tests and simulation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Behavior {
    #[default]
    Honest,
    /// Sends nothing.
    Silent,
    /// As primary: sends two conflicting PRE_PREPAREs per sequence number and
    /// takes no further part. As backup: votes for a fabricated digest.
    Equivocate,
}

#[derive(Debug, Default)]
struct Slot {
    preprepare: Option<(Hash, OrderedBatch)>,
    prepares: BTreeMap<Hash, BTreeSet<usize>>,
    commits: BTreeMap<Hash, BTreeSet<usize>>,
    prepared: bool,
    committed: bool,
}

#[derive(Debug)]
pub struct PbftReplica {
    id: usize,
    n: usize,
    f: usize,
    view: u64,
    key: KeyPair,
    peers: Vec<PublicKey>,
    behavior: Behavior,
    cutter: BatchCutter,
    next_seq: u64,
    log: BTreeMap<u64, Slot>,
    next_deliver: u64,
    delivered: Vec<OrderedBatch>,
    equivocations: u64,
}

impl PbftReplica {
    /// `peers[i]` is replica i's public key; `peers[id]` must match `key`.
    pub fn new(
        id: usize,
        f: usize,
        key: KeyPair,
        peers: Vec<PublicKey>,
        policy: BatchPolicy,
    ) -> Result<Self, ConfigError> {
        let n = peers.len();
        quorum_size(n, f)?;
        Ok(PbftReplica {
            id,
            n,
            f,
            view: 0,
            key,
            peers,
            behavior: Behavior::Honest,
            cutter: BatchCutter::new(policy),
            next_seq: 1,
            log: BTreeMap::new(),
            next_deliver: 1,
            delivered: Vec::new(),
            equivocations: 0,
        })
    }

    pub fn with_behavior(mut self, behavior: Behavior) -> Self {
        self.behavior = behavior;
        self
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn behavior(&self) -> Behavior {
        self.behavior
    }

    pub fn view(&self) -> u64 {
        self.view
    }

    pub fn primary(&self) -> usize {
        (self.view % self.n as u64) as usize
    }

    pub fn is_primary(&self) -> bool {
        self.primary() == self.id
    }

    /// Conflicting PRE_PREPAREs this replica has seen and ignored.
    pub fn equivocations_detected(&self) -> u64 {
        self.equivocations
    }

    pub fn is_prepared(&self, seq: u64) -> bool {
        self.log.get(&seq).is_some_and(|s| s.prepared)
    }

    pub fn is_committed(&self, seq: u64) -> bool {
        self.log.get(&seq).is_some_and(|s| s.committed)
    }

    /// Next sequence number awaiting delivery.
    pub fn next_deliver(&self) -> u64 {
        self.next_deliver
    }

    pub fn next_deadline(&self) -> Option<u64> {
        if self.is_primary() {
            self.cutter.next_deadline()
        } else {
            None
        }
    }

    pub fn take_delivered(&mut self) -> Vec<OrderedBatch> {
        std::mem::take(&mut self.delivered)
    }

    fn sign(&self, kind: PbftKind, seq: u64, digest: Hash, batch: Option<OrderedBatch>) -> PbftMessage {
        PbftMessage::new_signed(kind, self.view, seq, digest, self.id, &self.key, batch)
    }

    /// Client submission; only the primary orders.
    pub fn submit(&mut self, tx: EndorsedTransaction, now_ms: u64) -> Result<Vec<Outbound>, SubmitError> {
        if !self.is_primary() {
            return Err(SubmitError::NotPrimary);
        }
        match self.cutter.submit(tx, now_ms)? {
            Some(txs) => Ok(self.propose(txs, now_ms)),
            None => Ok(Vec::new()),
        }
    }

    pub fn tick(&mut self, now_ms: u64) -> Vec<Outbound> {
        if !self.is_primary() {
            return Vec::new();
        }
        match self.cutter.poll(now_ms) {
            Some(txs) => self.propose(txs, now_ms),
            None => Vec::new(),
        }
    }

    fn propose(&mut self, txs: Vec<EndorsedTransaction>, now_ms: u64) -> Vec<Outbound> {
        let seq = self.next_seq;
        self.next_seq += 1;
        let batch = OrderedBatch { seq, timestamp: now_ms, txs };
        match self.behavior {
            Behavior::Silent => Vec::new(),
            Behavior::Honest => {
                let digest = batch.digest();
                let msg = self.sign(PbftKind::PrePrepare, seq, digest, Some(batch.clone()));
                self.log.entry(seq).or_default().preprepare = Some((digest, batch));
                vec![Outbound::Broadcast(msg)]
            }
            Behavior::Equivocate => {
                let mut other = batch.clone();
                other.timestamp += 1;
                other.txs.reverse();
                let variants = [batch, other];
                let msgs: Vec<PbftMessage> = variants
                    .iter()
                    .map(|b| self.sign(PbftKind::PrePrepare, seq, b.digest(), Some(b.clone())))
                    .collect();
                let mut out = Vec::new();
                for to in (0..self.n).filter(|&r| r != self.id) {
                    let first = to % 2;
                    out.push(Outbound::Send { to, msg: msgs[first].clone() });
                    out.push(Outbound::Send { to, msg: msgs[1 - first].clone() });
                }
                out
            }
        }
    }

    /// Handles one protocol message.
    pub fn on_message(&mut self, msg: PbftMessage) -> Vec<Outbound> {
        if msg.view != self.view || msg.seq == 0 || msg.sender_id >= self.n || msg.sender_id == self.id {
            return Vec::new();
        }
        if !msg.verify(&self.peers[msg.sender_id]) {
            return Vec::new();
        }
        let out = match msg.kind {
            PbftKind::PrePrepare => self.on_preprepare(msg),
            PbftKind::Prepare => self.on_prepare(msg),
            PbftKind::Commit => self.on_commit(msg),
        };
        self.filter_outbound(out)
    }

    fn filter_outbound(&self, out: Vec<Outbound>) -> Vec<Outbound> {
        match self.behavior {
            Behavior::Honest => out,
            Behavior::Silent => Vec::new(),
            Behavior::Equivocate if self.is_primary() => Vec::new(),
            Behavior::Equivocate => out
                .into_iter()
                .map(|o| match o {
                    Outbound::Broadcast(m) => {
                        let bogus = crate::crypto::sha256(m.batch_digest.as_bytes());
                        Outbound::Broadcast(self.sign(m.kind, m.seq, bogus, None))
                    }
                    other => other,
                })
                .collect(),
        }
    }

    /// Accepts a PRE_PREPARE from the primary of the current view unless its
    /// sequence number is already bound to a different digest.
    pub fn on_preprepare(&mut self, msg: PbftMessage) -> Vec<Outbound> {
        if msg.kind != PbftKind::PrePrepare || msg.sender_id != self.primary() || msg.view != self.view {
            return Vec::new();
        }
        let Some(batch) = msg.batch else {
            return Vec::new();
        };
        if batch.seq != msg.seq || batch.digest() != msg.batch_digest {
            return Vec::new();
        }
        let slot = self.log.entry(msg.seq).or_default();
        if let Some((bound, _)) = &slot.preprepare {
            if *bound != msg.batch_digest {
                self.equivocations += 1;
            }
            return Vec::new();
        }
        slot.preprepare = Some((msg.batch_digest, batch));
        slot.prepares.entry(msg.batch_digest).or_default().insert(self.id);
        let prepare = self.sign(PbftKind::Prepare, msg.seq, msg.batch_digest, None);
        let mut out = vec![Outbound::Broadcast(prepare)];
        out.extend(self.advance(msg.seq));
        out
    }

    /// Logs a PREPARE; once prepared, broadcasts COMMIT exactly once.
    pub fn on_prepare(&mut self, msg: PbftMessage) -> Vec<Outbound> {
        if msg.kind != PbftKind::Prepare || msg.sender_id == self.primary() {
            return Vec::new();
        }
        self.log.entry(msg.seq).or_default().prepares.entry(msg.batch_digest).or_default().insert(msg.sender_id);
        self.advance(msg.seq)
    }

    /// Logs a COMMIT; commits locally once prepared with a 2f+1 commit quorum.
    pub fn on_commit(&mut self, msg: PbftMessage) -> Vec<Outbound> {
        if msg.kind != PbftKind::Commit {
            return Vec::new();
        }
        self.log.entry(msg.seq).or_default().commits.entry(msg.batch_digest).or_default().insert(msg.sender_id);
        self.advance(msg.seq)
    }

    fn advance(&mut self, seq: u64) -> Vec<Outbound> {
        let (f, id) = (self.f, self.id);
        let mut out = Vec::new();
        let Some(slot) = self.log.get_mut(&seq) else {
            return out;
        };
        let Some((digest, _)) = &slot.preprepare else {
            return out;
        };
        let digest = *digest;
        if !slot.prepared && slot.prepares.get(&digest).map_or(0, BTreeSet::len) >= 2 * f {
            slot.prepared = true;
            slot.commits.entry(digest).or_default().insert(id);
            out.push(Outbound::Broadcast(self.sign(PbftKind::Commit, seq, digest, None)));
        }
        let slot = self.log.get_mut(&seq).expect("slot exists");
        if slot.prepared && !slot.committed && slot.commits.get(&digest).map_or(0, BTreeSet::len) > 2 * f {
            slot.committed = true;
            self.deliver_ready();
        }
        out
    }

    fn deliver_ready(&mut self) {
        while let Some(slot) = self.log.get(&self.next_deliver) {
            if !slot.committed {
                break;
            }
            let (_, batch) = slot.preprepare.as_ref().expect("committed slot has a batch");
            self.delivered.push(batch.clone());
            self.next_deliver += 1;
        }
    }
}

/// Deterministic signing key of replica `index`.
pub fn replica_key(seed: u64, index: usize) -> KeyPair {
    let mut s = [0u8; 32];
    s[..8].copy_from_slice(&seed.to_le_bytes());
    s[8..16].copy_from_slice(&(index as u64).to_le_bytes());
    s[16..].copy_from_slice(b"pbft-replica-key");
    KeyPair::from_seed(s)
}

/// n replicas wired through an in-memory FIFO bus; the ordering engine used
/// by a single-process node.
#[derive(Debug)]
pub struct PbftCluster {
    replicas: Vec<PbftReplica>,
    delivered: Vec<OrderedBatch>,
}

impl PbftCluster {
    /// Replica keys are derived deterministically from `seed`.
    pub fn new(n: usize, f: usize, policy: BatchPolicy, seed: u64) -> Result<Self, ConfigError> {
        quorum_size(n, f)?;
        let keys: Vec<KeyPair> = (0..n).map(|i| replica_key(seed, i)).collect();
        let peers: Vec<PublicKey> = keys.iter().map(KeyPair::public).collect();
        let replicas = keys
            .into_iter()
            .enumerate()
            .map(|(i, k)| PbftReplica::new(i, f, k, peers.clone(), policy))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PbftCluster { replicas, delivered: Vec::new() })
    }

    pub fn replicas(&self) -> &[PbftReplica] {
        &self.replicas
    }

    fn pump(&mut self, initial: Vec<(usize, Outbound)>) {
        let mut queue: VecDeque<(usize, PbftMessage)> = VecDeque::new();
        let n = self.replicas.len();
        let route = |queue: &mut VecDeque<(usize, PbftMessage)>, from: usize, o: Outbound| match o {
            Outbound::Broadcast(m) => {
                for to in (0..n).filter(|&t| t != from) {
                    queue.push_back((to, m.clone()));
                }
            }
            Outbound::Send { to, msg } => queue.push_back((to, msg)),
        };
        for (from, o) in initial {
            route(&mut queue, from, o);
        }
        while let Some((to, msg)) = queue.pop_front() {
            for o in self.replicas[to].on_message(msg) {
                route(&mut queue, to, o);
            }
        }
        // Replica 0 is the primary of view 0 and delivers every batch.
        self.delivered.extend(self.replicas[0].take_delivered());
        for r in &mut self.replicas[1..] {
            r.take_delivered();
        }
    }
}

impl OrderingEngine for PbftCluster {
    fn engine_id(&self) -> &'static str {
        "pbft"
    }

    fn submit(&mut self, tx: EndorsedTransaction, now_ms: u64) -> Result<(), SubmitError> {
        let out = self.replicas[0].submit(tx, now_ms)?;
        self.pump(out.into_iter().map(|o| (0, o)).collect());
        Ok(())
    }

    fn tick(&mut self, now_ms: u64) {
        let out = self.replicas[0].tick(now_ms);
        self.pump(out.into_iter().map(|o| (0, o)).collect());
    }

    fn next_deadline(&self) -> Option<u64> {
        self.replicas[0].next_deadline()
    }

    fn take_delivered(&mut self) -> Vec<OrderedBatch> {
        std::mem::take(&mut self.delivered)
    }
}
