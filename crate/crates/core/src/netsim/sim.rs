// SPDX-License-Identifier: Apache-2.0

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value};

use super::setup::Prepared;
use super::{
    Arm, LatencyMs, Metrics, RunOutcome, RunReport, RunSummary, SafetyReport, SimConfig, TxFate, Workload,
};
use crate::codec::canonical_encode;
use crate::consensus::{
    replica_key, BatchPolicy, EngineKind, OrderedBatch, OrderingEngine, Outbound, PbftMessage, PbftReplica,
    SoloOrderer,
};
use crate::crypto::{sha256, Hash, PublicKey};
use crate::ledger::{Block, Ledger, Version, WorldState};
use crate::node::build_endorsers;
use crate::txflow::{
    self, simulate, ChaincodeRegistry, EndorsedTransaction, Endorsement, EndorsementPolicy, Endorser,
    ReadWriteSet,
};

/// Virtual time in microseconds.
type Us = u64;

const MAX_RETRIES: u32 = 3;
const NETWORK_STREAM: u64 = 0x6e65_7477_6f72_6b00;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum NodeId {
    Client,
    Peer(usize),
    Orderer,
    Replica(usize),
}

impl NodeId {
    fn name(self) -> String {
        match self {
            NodeId::Client => "client".into(),
            NodeId::Peer(i) => format!("peer{i}"),
            NodeId::Orderer => "orderer".into(),
            NodeId::Replica(i) => format!("replica{i}"),
        }
    }
}

enum Msg {
    Proposal { tx: usize, attempt: u32 },
    Endorsement { tx: usize, attempt: u32, result: Option<(ReadWriteSet, Endorsement)> },
    Submit(Box<EndorsedTransaction>),
    Pbft(Box<PbftMessage>),
    Block { from: usize, batch: Rc<OrderedBatch> },
    Notice { peer: usize, results: Vec<(usize, TxFate)> },
}

impl Msg {
    fn kind(&self) -> &'static str {
        match self {
            Msg::Proposal { .. } => "proposal",
            Msg::Endorsement { .. } => "endorsement",
            Msg::Submit(_) => "submit",
            Msg::Pbft(_) => "pbft",
            Msg::Block { .. } => "block",
            Msg::Notice { .. } => "notice",
        }
    }
}

enum Event {
    Deliver { to: NodeId, msg: Msg },
    EndorseDone(usize),
    ExecDone(usize),
    OrdererTimer,
    ReplicaTimer(usize),
    Retry(usize),
}

struct Scheduled {
    at: Us,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    // Reversed: the heap pops the earliest event, ties in scheduling order.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

type EndorseJob = (usize, u32, Option<(ReadWriteSet, Endorsement)>);

struct Peer {
    endorser: Endorser,
    ledger: Ledger,
    /// Baseline arm: state built by serial execution.
    exec_state: WorldState,
    exec_log: Vec<(usize, TxFate)>,
    endorse_queue: VecDeque<(usize, u32)>,
    endorsing: Option<EndorseJob>,
    exec_queue: VecDeque<(Version, usize)>,
    executing: Option<(usize, Option<ReadWriteSet>, Version)>,
    /// Block copies received per sequence number and digest.
    votes: BTreeMap<u64, BTreeMap<Hash, BTreeSet<usize>>>,
    ready: BTreeMap<u64, Rc<OrderedBatch>>,
    next_seq: u64,
}

struct Replica {
    replica: PbftReplica,
    honest: bool,
    ledger: Option<Ledger>,
    timer: Option<u64>,
    equivocations: u64,
}

#[derive(Default)]
struct ClientTx {
    started: Option<Us>,
    attempt: u32,
    got: Vec<(ReadWriteSet, Endorsement)>,
    submitted: bool,
    notices: BTreeSet<usize>,
    fate: Option<TxFate>,
    done: bool,
}

pub(crate) struct Sim<'a> {
    cfg: &'a SimConfig,
    arm: Arm,
    prepared: &'a Prepared,
    index: HashMap<&'a str, usize>,
    registry: ChaincodeRegistry,
    policy: EndorsementPolicy,
    now: Us,
    queue: BinaryHeap<Scheduled>,
    next_event: u64,
    rng: ChaCha20Rng,
    latency_us: (Us, Us),
    retransmit_us: Us,
    exec_us: Us,
    peers: Vec<Peer>,
    orderer: Option<SoloOrderer>,
    orderer_timer: Option<u64>,
    replicas: Vec<Replica>,
    client: Vec<ClientTx>,
    window: usize,
    next_start: usize,
    lowest_open: usize,
    finished: usize,
    latencies: Vec<Us>,
    last_progress: Us,
    last_finish: Us,
    transcript: Vec<String>,
}

fn ms_to_us(ms: f64) -> Us {
    (ms * 1000.0).round() as Us
}

impl<'a> Sim<'a> {
    pub(crate) fn new(cfg: &'a SimConfig, workload: &Workload, arm: Arm, prepared: &'a Prepared) -> Self {
        let endorsers = build_endorsers(cfg.seed, cfg.endorsers);
        let policy = EndorsementPolicy::new(
            cfg.endorsement_k,
            endorsers.iter().map(|e| (e.id.clone(), e.public_key())),
        )
        .expect("validated config");
        let peers = endorsers
            .into_iter()
            .map(|endorser| Peer {
                endorser,
                ledger: prepared.ledger.snapshot(),
                exec_state: prepared.ledger.state().clone(),
                exec_log: Vec::new(),
                endorse_queue: VecDeque::new(),
                endorsing: None,
                exec_queue: VecDeque::new(),
                executing: None,
                votes: BTreeMap::new(),
                ready: BTreeMap::new(),
                next_seq: 1,
            })
            .collect();
        let batch_policy = BatchPolicy::new(cfg.batch_max, cfg.batch_wait_ms).expect("validated config");
        let (orderer, replicas) = match cfg.orderer {
            EngineKind::Solo => (Some(SoloOrderer::new(batch_policy)), Vec::new()),
            EngineKind::Pbft => {
                let keys: Vec<_> = (0..cfg.n).map(|i| replica_key(cfg.seed, i)).collect();
                let pubs: Vec<PublicKey> = keys.iter().map(|k| k.public()).collect();
                let replicas = keys
                    .into_iter()
                    .enumerate()
                    .map(|(i, key)| {
                        let behavior = cfg.byzantine.get(&i).copied().unwrap_or_default();
                        let replica = PbftReplica::new(i, cfg.f, key, pubs.clone(), batch_policy)
                            .expect("validated config")
                            .with_behavior(behavior);
                        let honest = cfg.is_honest(i);
                        let ledger = (honest && arm == Arm::Pipeline).then(|| prepared.ledger.snapshot());
                        Replica { replica, honest, ledger, timer: None, equivocations: 0 }
                    })
                    .collect();
                (None, replicas)
            }
        };
        let (lo, hi) = cfg.latency_ms_range;
        let latency_us = (ms_to_us(lo), ms_to_us(hi));
        let tx_count = prepared.txs.len();
        let mut sim = Sim {
            cfg,
            arm,
            prepared,
            index: prepared.txs.iter().enumerate().map(|(i, t)| (t.proposal.tx_id.as_str(), i)).collect(),
            registry: ChaincodeRegistry::standard(),
            policy,
            now: 0,
            queue: BinaryHeap::new(),
            next_event: 0,
            rng: ChaCha20Rng::seed_from_u64(cfg.seed ^ NETWORK_STREAM),
            latency_us,
            retransmit_us: 2 * latency_us.1.max(1000),
            exec_us: ms_to_us(cfg.exec_cost_ms),
            peers,
            orderer,
            orderer_timer: None,
            replicas,
            client: (0..tx_count).map(|_| ClientTx::default()).collect(),
            window: workload.concurrency,
            next_start: 0,
            lowest_open: 0,
            finished: 0,
            latencies: Vec::new(),
            last_progress: 0,
            last_finish: 0,
            transcript: Vec::new(),
        };
        let config_digest = sha256(&serde_json::to_vec(&(cfg, workload)).expect("config serializes"));
        sim.log(json!({
            "ev": "start",
            "arm": match arm { Arm::Pipeline => "pipeline", Arm::Baseline => "baseline" },
            "configDigest": config_digest.to_hex(),
            "bootstrapHeight": prepared.ledger.height(),
            "txs": tx_count,
        }));
        sim
    }

    fn timeout_us(&self) -> Us {
        1000 * self.latency_us.1.max(1000)
    }

    fn log(&mut self, mut v: Value) {
        v["t"] = json!(self.now);
        let bytes = canonical_encode(&v).expect("transcript values are integers and strings");
        self.transcript.push(String::from_utf8(bytes).expect("canonical JSON is UTF-8"));
    }

    fn schedule(&mut self, at: Us, event: Event) {
        self.next_event += 1;
        self.queue.push(Scheduled { at, seq: self.next_event, event });
    }

    fn sample_latency(&mut self) -> Us {
        let (lo, hi) = self.latency_us;
        if hi > lo {
            self.rng.gen_range(lo..=hi)
        } else {
            lo
        }
    }

    /// Sends over the lossy bus: each lost attempt costs one retransmit
    /// timeout, and after `MAX_RETRIES` retries the message is gone.
    fn send(&mut self, from: NodeId, to: NodeId, msg: Msg) {
        let mut delay = 0;
        for _ in 0..=MAX_RETRIES {
            if self.cfg.drop_rate > 0.0 && self.rng.gen::<f64>() < self.cfg.drop_rate {
                delay += self.retransmit_us;
                continue;
            }
            delay += self.sample_latency();
            self.schedule(self.now + delay, Event::Deliver { to, msg });
            return;
        }
        let kind = msg.kind();
        self.log(json!({"ev": "lost", "from": from.name(), "to": to.name(), "kind": kind}));
    }

    fn progress(&mut self) {
        self.last_progress = self.now;
    }

    pub(crate) fn run(mut self) -> RunReport {
        self.start_more();
        let mut timed_out = false;
        while let Some(ev) = self.queue.pop() {
            if self.finished < self.client.len() && ev.at > self.last_progress + self.timeout_us() {
                timed_out = true;
                break;
            }
            self.now = ev.at;
            self.handle(ev.event);
        }
        let all_done = self.finished == self.client.len();
        let outcome = if self.client.is_empty() {
            RunOutcome::EmptyRun
        } else if all_done {
            RunOutcome::Completed
        } else {
            timed_out = true;
            RunOutcome::LivenessTimeout
        };
        if timed_out {
            self.now = self.last_progress + self.timeout_us();
        }
        let label = match outcome {
            RunOutcome::Completed => "completed",
            RunOutcome::LivenessTimeout => "livenessTimeout",
            RunOutcome::EmptyRun => "emptyRun",
        };
        self.log(json!({"ev": "end", "outcome": label}));
        self.finish(outcome)
    }

    fn handle(&mut self, event: Event) {
        match event {
            Event::Deliver { to, msg } => match (to, msg) {
                (NodeId::Peer(p), Msg::Proposal { tx, attempt }) => {
                    self.peers[p].endorse_queue.push_back((tx, attempt));
                    self.start_endorse(p);
                }
                (NodeId::Peer(p), Msg::Block { from, batch }) => self.peer_block(p, from, batch),
                (NodeId::Client, Msg::Endorsement { tx, attempt, result }) => self.on_endorsement(tx, attempt, result),
                (NodeId::Client, Msg::Notice { peer, results }) => self.on_notice(peer, results),
                (NodeId::Orderer, Msg::Submit(tx)) => {
                    let now_ms = self.now / 1000;
                    let orderer = self.orderer.as_mut().expect("solo run");
                    if let Err(e) = orderer.submit(*tx, now_ms) {
                        self.log(json!({"ev": "refused", "node": "orderer", "reason": e.to_string()}));
                    }
                    self.orderer_output();
                }
                (NodeId::Replica(r), Msg::Submit(tx)) => {
                    let now_ms = self.now / 1000;
                    match self.replicas[r].replica.submit(*tx, now_ms) {
                        Ok(out) => self.route(r, out),
                        Err(e) => {
                            let node = NodeId::Replica(r).name();
                            self.log(json!({"ev": "refused", "node": node, "reason": e.to_string()}));
                        }
                    }
                    self.replica_output(r);
                }
                (NodeId::Replica(r), Msg::Pbft(m)) => {
                    let out = self.replicas[r].replica.on_message(*m);
                    self.route(r, out);
                    self.replica_output(r);
                }
                (to, msg) => unreachable!("{} sent to {}", msg.kind(), to.name()),
            },
            Event::EndorseDone(p) => {
                let (tx, attempt, result) = self.peers[p].endorsing.take().expect("endorsement in progress");
                self.send(NodeId::Peer(p), NodeId::Client, Msg::Endorsement { tx, attempt, result });
                self.start_endorse(p);
            }
            Event::ExecDone(p) => {
                let (tx, rwset, version) = self.peers[p].executing.take().expect("execution in progress");
                let fate = match rwset {
                    Some(rw) => {
                        self.peers[p].exec_state.apply_writes(&rw.writes, version);
                        TxFate::Valid
                    }
                    None => TxFate::Rejected,
                };
                self.peers[p].exec_log.push((tx, fate));
                self.progress();
                self.send(NodeId::Peer(p), NodeId::Client, Msg::Notice { peer: p, results: vec![(tx, fate)] });
                self.start_exec(p);
            }
            Event::OrdererTimer => {
                self.orderer_timer = None;
                let now_ms = self.now / 1000;
                self.orderer.as_mut().expect("solo run").tick(now_ms);
                self.orderer_output();
            }
            Event::ReplicaTimer(r) => {
                self.replicas[r].timer = None;
                let out = self.replicas[r].replica.tick(self.now / 1000);
                self.route(r, out);
                self.replica_output(r);
            }
            Event::Retry(tx) => self.request_endorsements(tx),
        }
    }

    // ---- client ----

    fn start_more(&mut self) {
        while self.next_start < self.client.len() && self.next_start < self.lowest_open + self.window {
            let tx = self.next_start;
            self.next_start += 1;
            self.client[tx].started = Some(self.now);
            let id = self.prepared.txs[tx].proposal.tx_id.clone();
            self.log(json!({"ev": "submit", "tx": id}));
            match self.arm {
                Arm::Pipeline => self.request_endorsements(tx),
                Arm::Baseline => {
                    let unendorsed = EndorsedTransaction {
                        proposal: self.prepared.txs[tx].proposal.clone(),
                        rwset: ReadWriteSet::default(),
                        endorsements: Vec::new(),
                    };
                    self.client[tx].submitted = true;
                    self.send(NodeId::Client, self.ordering_entry(), Msg::Submit(Box::new(unendorsed)));
                }
            }
        }
    }

    fn ordering_entry(&self) -> NodeId {
        match self.cfg.orderer {
            EngineKind::Solo => NodeId::Orderer,
            EngineKind::Pbft => NodeId::Replica(0),
        }
    }

    fn request_endorsements(&mut self, tx: usize) {
        let attempt = self.client[tx].attempt;
        for j in 0..self.cfg.endorsement_k {
            let peer = (tx + j) % self.cfg.endorsers;
            self.send(NodeId::Client, NodeId::Peer(peer), Msg::Proposal { tx, attempt });
        }
    }

    fn on_endorsement(&mut self, tx: usize, attempt: u32, result: Option<(ReadWriteSet, Endorsement)>) {
        let c = &mut self.client[tx];
        if c.done || c.submitted || attempt != c.attempt {
            return;
        }
        let Some(r) = result else {
            return self.retry_or_abort(tx, "refused");
        };
        c.got.push(r);
        if c.got.len() < self.cfg.endorsement_k {
            return;
        }
        if c.got.windows(2).any(|w| w[0].0 != w[1].0) {
            return self.retry_or_abort(tx, "mismatch");
        }
        let got = std::mem::take(&mut c.got);
        c.submitted = true;
        let rwset = got[0].0.clone();
        let endorsed = EndorsedTransaction {
            proposal: self.prepared.txs[tx].proposal.clone(),
            rwset,
            endorsements: got.into_iter().map(|(_, e)| e).collect(),
        };
        let id = endorsed.tx_id().to_string();
        self.log(json!({"ev": "endorsed", "tx": id, "attempt": attempt}));
        self.send(NodeId::Client, self.ordering_entry(), Msg::Submit(Box::new(endorsed)));
    }

    fn retry_or_abort(&mut self, tx: usize, reason: &str) {
        let id = self.prepared.txs[tx].proposal.tx_id.clone();
        let c = &mut self.client[tx];
        c.got.clear();
        if c.attempt < MAX_RETRIES {
            c.attempt += 1;
            let attempt = c.attempt;
            self.log(json!({"ev": "retry", "tx": id, "attempt": attempt, "reason": reason}));
            self.schedule(self.now + self.retransmit_us, Event::Retry(tx));
        } else {
            c.fate = Some(TxFate::Aborted);
            self.log(json!({"ev": "abort", "tx": id, "reason": reason}));
            self.finish_tx(tx);
        }
    }

    fn on_notice(&mut self, peer: usize, results: Vec<(usize, TxFate)>) {
        for (tx, fate) in results {
            let c = &mut self.client[tx];
            if c.done {
                continue;
            }
            c.fate.get_or_insert(fate);
            c.notices.insert(peer);
            if c.notices.len() == self.cfg.endorsers {
                let latency = self.now - c.started.expect("started before committed");
                self.latencies.push(latency);
                self.finish_tx(tx);
            }
        }
    }

    fn finish_tx(&mut self, tx: usize) {
        let c = &mut self.client[tx];
        c.done = true;
        let fate = c.fate;
        let latency = c.started.map(|s| self.now - s);
        self.finished += 1;
        self.last_finish = self.now;
        self.progress();
        let id = self.prepared.txs[tx].proposal.tx_id.clone();
        self.log(json!({"ev": "done", "tx": id, "fate": fate, "latencyUs": latency}));
        while self.lowest_open < self.client.len() && self.client[self.lowest_open].done {
            self.lowest_open += 1;
        }
        self.start_more();
    }

    // ---- peers ----

    fn start_endorse(&mut self, p: usize) {
        let peer = &mut self.peers[p];
        if peer.endorsing.is_some() {
            return;
        }
        let Some((tx, attempt)) = peer.endorse_queue.pop_front() else {
            return;
        };
        let wtx = &self.prepared.txs[tx];
        let result = peer
            .endorser
            .endorse(&self.registry, &wtx.proposal, &wtx.transient, peer.ledger.state())
            .ok();
        peer.endorsing = Some((tx, attempt, result));
        self.schedule(self.now + self.exec_us, Event::EndorseDone(p));
    }

    fn start_exec(&mut self, p: usize) {
        let peer = &mut self.peers[p];
        if peer.executing.is_some() {
            return;
        }
        let Some((version, tx)) = peer.exec_queue.pop_front() else {
            return;
        };
        let wtx = &self.prepared.txs[tx];
        let rwset = simulate(&self.registry, &wtx.proposal, &wtx.transient, &peer.exec_state).ok();
        peer.executing = Some((tx, rwset, version));
        self.schedule(self.now + self.exec_us, Event::ExecDone(p));
    }

    /// Blocks from PBFT replicas are accepted once `f + 1` replicas sent the
    /// same one; at least one of them is honest.
    fn peer_block(&mut self, p: usize, from: usize, batch: Rc<OrderedBatch>) {
        let threshold = match self.cfg.orderer {
            EngineKind::Solo => 1,
            EngineKind::Pbft => self.cfg.f + 1,
        };
        let peer = &mut self.peers[p];
        let seq = batch.seq;
        if seq < peer.next_seq || peer.ready.contains_key(&seq) {
            return;
        }
        let voters = peer.votes.entry(seq).or_default().entry(batch.digest()).or_default();
        voters.insert(from);
        if voters.len() >= threshold {
            peer.votes.remove(&seq);
            peer.ready.insert(seq, batch);
        }
        loop {
            let next = self.peers[p].next_seq;
            let Some(batch) = self.peers[p].ready.remove(&next) else { break };
            self.peers[p].next_seq += 1;
            self.peer_apply(p, &batch);
        }
    }

    fn peer_apply(&mut self, p: usize, batch: &OrderedBatch) {
        match self.arm {
            Arm::Pipeline => {
                let peer = &mut self.peers[p];
                let event = txflow::validate_and_commit(
                    &mut peer.ledger,
                    batch.txs.clone(),
                    &self.policy,
                    &self.registry,
                    batch.timestamp,
                )
                .expect("in-memory commit cannot fail");
                let Some(event) = event else { return };
                let hash = peer.ledger.tip_hash().to_hex();
                let node = NodeId::Peer(p).name();
                self.log(json!({"ev": "commit", "node": node, "height": event.height, "hash": hash}));
                self.progress();
                let results = event
                    .tx_ids
                    .iter()
                    .zip(&event.codes)
                    .filter_map(|(id, code)| self.index.get(id.as_str()).map(|&i| (i, TxFate::from(*code))))
                    .collect();
                self.send(NodeId::Peer(p), NodeId::Client, Msg::Notice { peer: p, results });
            }
            Arm::Baseline => {
                let height = self.prepared.ledger.height() + batch.seq;
                for (i, tx) in batch.txs.iter().enumerate() {
                    if let Some(&idx) = self.index.get(tx.tx_id()) {
                        self.peers[p].exec_queue.push_back((Version::new(height, i as u32), idx));
                    }
                }
                self.start_exec(p);
            }
        }
    }

    // ---- ordering ----

    fn broadcast_block(&mut self, from_id: usize, from: NodeId, batch: OrderedBatch) {
        let node = from.name();
        let ids: Vec<&str> = batch.txs.iter().map(|t| t.tx_id()).collect();
        let line = json!({"ev": "ordered", "node": node, "seq": batch.seq, "digest": batch.digest().to_hex(), "txs": ids});
        self.log(line);
        self.progress();
        let batch = Rc::new(batch);
        for p in 0..self.peers.len() {
            self.send(from, NodeId::Peer(p), Msg::Block { from: from_id, batch: batch.clone() });
        }
    }

    fn orderer_output(&mut self) {
        let orderer = self.orderer.as_mut().expect("solo run");
        let delivered = orderer.take_delivered();
        let deadline = orderer.next_deadline();
        for batch in delivered {
            self.broadcast_block(0, NodeId::Orderer, batch);
        }
        if deadline.is_some() && deadline != self.orderer_timer {
            self.orderer_timer = deadline;
            let at = (deadline.unwrap() * 1000).max(self.now);
            self.schedule(at, Event::OrdererTimer);
        }
    }

    fn route(&mut self, from: usize, out: Vec<Outbound>) {
        for o in out {
            match o {
                Outbound::Broadcast(m) => {
                    for to in (0..self.replicas.len()).filter(|&t| t != from) {
                        self.send(NodeId::Replica(from), NodeId::Replica(to), Msg::Pbft(Box::new(m.clone())));
                    }
                }
                Outbound::Send { to, msg } => {
                    self.send(NodeId::Replica(from), NodeId::Replica(to), Msg::Pbft(Box::new(msg)));
                }
            }
        }
    }

    fn replica_output(&mut self, r: usize) {
        let rep = &mut self.replicas[r];
        let delivered = rep.replica.take_delivered();
        let seen = rep.replica.equivocations_detected();
        if rep.honest && seen > rep.equivocations {
            rep.equivocations = seen;
            let node = NodeId::Replica(r).name();
            self.log(json!({"ev": "equivocation", "node": node, "count": seen}));
        }
        let rep = &mut self.replicas[r];
        let deadline = rep.replica.next_deadline();
        if deadline.is_some() && deadline != rep.timer {
            rep.timer = deadline;
            let at = (deadline.unwrap() * 1000).max(self.now);
            self.schedule(at, Event::ReplicaTimer(r));
        }
        if !self.replicas[r].honest {
            return;
        }
        for batch in delivered {
            if let Some(ledger) = self.replicas[r].ledger.as_mut() {
                let event = txflow::validate_and_commit(
                    ledger,
                    batch.txs.clone(),
                    &self.policy,
                    &self.registry,
                    batch.timestamp,
                )
                .expect("in-memory commit cannot fail");
                if let Some(event) = event {
                    let hash = ledger.tip_hash().to_hex();
                    let node = NodeId::Replica(r).name();
                    self.log(json!({"ev": "commit", "node": node, "height": event.height, "hash": hash}));
                }
            }
            self.broadcast_block(r, NodeId::Replica(r), batch);
        }
    }

    // ---- results ----

    fn finish(self, outcome: RunOutcome) -> RunReport {
        let mut ledgers: Vec<(String, Ledger)> = Vec::new();
        let mut final_states = Vec::new();
        let mut exec_logs = Vec::new();
        for (i, peer) in self.peers.into_iter().enumerate() {
            let name = NodeId::Peer(i).name();
            match self.arm {
                Arm::Pipeline => final_states.push((name.clone(), peer.ledger.state().clone())),
                Arm::Baseline => {
                    final_states.push((name.clone(), peer.exec_state));
                    exec_logs.push(peer.exec_log);
                }
            }
            ledgers.push((name, peer.ledger));
        }
        let mut equivocations = 0;
        for (i, rep) in self.replicas.into_iter().enumerate() {
            if rep.honest {
                equivocations += rep.replica.equivocations_detected();
            }
            if let Some(l) = rep.ledger {
                ledgers.push((NodeId::Replica(i).name(), l));
            }
        }
        let honest_nodes = ledgers.iter().map(|(n, _)| n.clone()).collect();
        let safety = match self.arm {
            Arm::Pipeline => {
                let chains: Vec<&[Block]> = ledgers.iter().map(|(_, l)| l.blocks()).collect();
                SafetyReport {
                    honest_nodes,
                    identical: chains.windows(2).all(|w| chain_hashes(w[0]) == chain_hashes(w[1])),
                    prefix_consistent: pairwise_prefix(&chains.iter().map(|c| chain_hashes(c)).collect::<Vec<_>>()),
                }
            }
            Arm::Baseline => {
                let dumps: Vec<Vec<u8>> = final_states.iter().map(|(_, s)| s.canonical_dump()).collect();
                SafetyReport {
                    honest_nodes,
                    identical: exec_logs.windows(2).all(|w| w[0] == w[1]) && dumps.windows(2).all(|w| w[0] == w[1]),
                    prefix_consistent: pairwise_prefix(&exec_logs),
                }
            }
        };

        let fates: Vec<(String, Option<TxFate>)> = self
            .prepared
            .txs
            .iter()
            .zip(&self.client)
            .map(|(t, c)| (t.proposal.tx_id.clone(), if c.done { c.fate } else { None }))
            .collect();
        let count = |f: TxFate| fates.iter().filter(|(_, x)| *x == Some(f)).count();
        let valid = count(TxFate::Valid);
        let mvcc = count(TxFate::MvccConflict);
        let rejected = count(TxFate::Rejected);
        let aborted = count(TxFate::Aborted);
        let committed = valid + mvcc + count(TxFate::Invalid) + rejected;
        let duration_ms = self.last_finish as f64 / 1000.0;
        let tps = (self.finished > 0 && self.last_finish > 0).then(|| valid as f64 / (duration_ms / 1000.0));
        let mut lat = self.latencies.clone();
        lat.sort_unstable();
        let pct = |p: f64| {
            let rank = ((p / 100.0) * lat.len() as f64).ceil().max(1.0) as usize;
            lat[rank - 1] as f64 / 1000.0
        };
        let latency_ms = (!lat.is_empty()).then(|| LatencyMs { p50: pct(50.0), p95: pct(95.0), p99: pct(99.0) });
        let metrics = Metrics {
            tps,
            latency_ms,
            invalid_rate: (committed > 0).then(|| mvcc as f64 / committed as f64),
            equivocations_detected: equivocations,
            duration_ms,
            submitted: self.next_start,
            committed,
            valid,
            mvcc_conflicts: mvcc,
            rejected,
            aborted,
            unfinished: self.client.len() - self.finished,
        };
        let transients = self
            .prepared
            .txs
            .iter()
            .map(|t| (t.proposal.tx_id.clone(), t.transient.clone()))
            .collect();
        RunReport {
            summary: RunSummary {
                arm: self.arm,
                engine: self.cfg.orderer,
                outcome,
                out_of_model: self.cfg.out_of_model(),
                safety,
                metrics,
            },
            transcript: self.transcript,
            ledgers,
            final_states,
            initial_state: self.prepared.ledger.state().clone(),
            bootstrap_height: self.prepared.ledger.height(),
            transients,
            fates,
        }
    }
}

fn chain_hashes(blocks: &[Block]) -> Vec<Hash> {
    blocks.iter().map(Block::hash).collect()
}

fn pairwise_prefix<T: PartialEq>(seqs: &[Vec<T>]) -> bool {
    seqs.iter().all(|a| {
        seqs.iter().all(|b| {
            let n = a.len().min(b.len());
            a[..n] == b[..n]
        })
    })
}
