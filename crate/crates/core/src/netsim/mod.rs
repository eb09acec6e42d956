// SPDX-License-Identifier: Apache-2.0

//! Whole-network simulation in virtual time.
//!
//! A run bootstraps a populated ledger, copies it to every node, then drives
//! a workload of ehr transactions through endorsing peers, an ordering
//! service (solo or PBFT replicas) and committing peers over a message bus
//! with sampled latency and drops. Everything is scheduled by one
//! single-threaded event loop seeded from the config, so a run is a pure
//! function of `(SimConfig, Workload)`.
//!
//! Two arms share the bus and the ordering service:
//!
//! ```text
//! pipeline  client -> k endorsers (execCostMs each, parallel) -> orderer -> peers validate
//! baseline  client -> orderer -> every peer executes serially (execCostMs each)
//! ```
//!
//! A run with no progress for `1000 x max(latency max, 1 ms)` of virtual
//! time ends with a liveness timeout. Every lost message is retried at most
//! three times before it is dropped for good.

mod setup;
mod sim;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{Behavior, EngineKind};
use crate::ledger::{Ledger, WorldState};
use crate::node::NodeError;
use crate::txflow::{Transient, ValidationCode};

pub use setup::{CONSENT_DOCTOR_PREFIX, DOCTOR_ID, HOSPITAL_ID};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    /// Endorsing peers; every peer also validates and commits.
    pub endorsers: usize,
    /// Endorsements a transaction needs (k of `endorsers`).
    pub endorsement_k: usize,
    pub orderer: EngineKind,
    pub n: usize,
    pub f: usize,
    /// Uniform one-way message latency in milliseconds, `[min, max]`.
    pub latency_ms_range: (f64, f64),
    /// Probability that one transmission attempt is lost.
    pub drop_rate: f64,
    /// Faulty ordering replicas by id. Solo has the single id 0.
    pub byzantine: BTreeMap<usize, Behavior>,
    /// Cost of one chaincode execution on a peer.
    pub exec_cost_ms: f64,
    pub batch_max: usize,
    pub batch_wait_ms: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 1,
            endorsers: 4,
            endorsement_k: 1,
            orderer: EngineKind::Solo,
            n: 4,
            f: 1,
            latency_ms_range: (1.0, 5.0),
            drop_rate: 0.0,
            byzantine: BTreeMap::new(),
            exec_cost_ms: 5.0,
            batch_max: 10,
            batch_wait_ms: 20,
        }
    }
}

impl SimConfig {
    /// Ordering replicas the config describes.
    pub fn replica_count(&self) -> usize {
        match self.orderer {
            EngineKind::Solo => 1,
            EngineKind::Pbft => self.n,
        }
    }

    /// Faults the ordering service is designed to tolerate.
    pub fn fault_budget(&self) -> usize {
        match self.orderer {
            EngineKind::Solo => 0,
            EngineKind::Pbft => self.f,
        }
    }

    pub fn faulty_replicas(&self) -> usize {
        self.byzantine.values().filter(|b| **b != Behavior::Honest).count()
    }

    /// More faulty replicas than the ordering service tolerates.
    pub fn out_of_model(&self) -> bool {
        self.faulty_replicas() > self.fault_budget()
    }

    pub fn is_honest(&self, replica: usize) -> bool {
        self.byzantine.get(&replica).is_none_or(|b| *b == Behavior::Honest)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        let (lo, hi) = self.latency_ms_range;
        if self.endorsers == 0 {
            return bad("endorsers must be at least 1".into());
        }
        if self.endorsement_k == 0 || self.endorsement_k > self.endorsers {
            return bad(format!("endorsementK must be in 1..={}", self.endorsers));
        }
        if self.orderer == EngineKind::Pbft && self.n < 3 * self.f + 1 {
            return bad(format!("pbft needs n >= 3f + 1 (n = {}, f = {})", self.n, self.f));
        }
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return bad(format!("latencyMsRange must satisfy 0 <= min <= max, got ({lo}, {hi})"));
        }
        if !(0.0..1.0).contains(&self.drop_rate) {
            return bad(format!("dropRate must be in [0, 1), got {}", self.drop_rate));
        }
        if !(self.exec_cost_ms.is_finite() && self.exec_cost_ms >= 0.0) {
            return bad(format!("execCostMs must be non-negative, got {}", self.exec_cost_ms));
        }
        if self.batch_max == 0 {
            return bad("batchMax must be at least 1".into());
        }
        if let Some(&id) = self.byzantine.keys().find(|&&id| id >= self.replica_count()) {
            return Err(SimError::UnknownTarget { target: id, replicas: self.replica_count() });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct Workload {
    pub tx_count: usize,
    /// Patients the workload spreads over; each is one contended key.
    pub key_count: usize,
    /// Probability that a transaction touches the same patient as the one
    /// before it. Otherwise it moves to the next patient in turn.
    pub conflict_rate: f64,
    /// Share of consent grants; the rest are record appends.
    pub consent_share: f64,
    /// Transactions a client keeps in flight. Transaction `i + concurrency`
    /// starts only after transaction `i` has finished.
    pub concurrency: usize,
}

impl Default for Workload {
    fn default() -> Self {
        Workload { tx_count: 100, key_count: 50, conflict_rate: 0.0, consent_share: 0.1, concurrency: 32 }
    }
}

impl Workload {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.key_count == 0 {
            return bad("keyCount must be at least 1".into());
        }
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.conflict_rate) {
            return bad(format!("conflictRate must be in [0, 1], got {}", self.conflict_rate));
        }
        if !(0.0..=1.0).contains(&self.consent_share) {
            return bad(format!("consentShare must be in [0, 1], got {}", self.consent_share));
        }
        Ok(())
    }
}

/// A change to a config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum Fault {
    /// Sets one ordering replica's behaviour; `HONEST` clears it.
    Byzantine { replica: usize, behavior: Behavior },
    DropRate { rate: f64 },
}

/// Returns `config` with `fault` applied.
pub fn inject_fault(config: &SimConfig, fault: &Fault) -> Result<SimConfig, SimError> {
    let mut out = config.clone();
    match *fault {
        Fault::Byzantine { replica, behavior } => {
            if replica >= config.replica_count() {
                return Err(SimError::UnknownTarget { target: replica, replicas: config.replica_count() });
            }
            if behavior == Behavior::Honest {
                out.byzantine.remove(&replica);
            } else {
                out.byzantine.insert(replica, behavior);
            }
        }
        Fault::DropRate { rate } => {
            if !(0.0..1.0).contains(&rate) {
                return Err(SimError::InvalidConfig(format!("dropRate must be in [0, 1), got {rate}")));
            }
            out.drop_rate = rate;
        }
    }
    Ok(out)
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("fault target {target} does not exist ({replicas} ordering replicas)")]
    UnknownTarget { target: usize, replicas: usize },
    #[error("network bootstrap failed: {0}")]
    Setup(#[from] NodeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Arm {
    Pipeline,
    Baseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RunOutcome {
    Completed,
    LivenessTimeout,
    EmptyRun,
}

/// What became of one workload transaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TxFate {
    Valid,
    MvccConflict,
    /// Committed with some other non-VALID code.
    Invalid,
    /// Baseline only: the chaincode refused it during serial execution.
    Rejected,
    /// Never ordered because endorsement kept failing.
    Aborted,
}

impl From<ValidationCode> for TxFate {
    fn from(code: ValidationCode) -> Self {
        match code {
            ValidationCode::Valid => TxFate::Valid,
            ValidationCode::MvccConflict => TxFate::MvccConflict,
            _ => TxFate::Invalid,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LatencyMs {
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Metrics {
    /// VALID transactions per simulated second; `None` when nothing finished.
    pub tps: Option<f64>,
    /// Submit to commit-on-every-peer, nearest-rank percentiles.
    pub latency_ms: Option<LatencyMs>,
    /// MVCC_CONFLICT share of committed workload transactions.
    pub invalid_rate: Option<f64>,
    pub equivocations_detected: u64,
    /// From the first submission to the last finished transaction.
    pub duration_ms: f64,
    pub submitted: usize,
    pub committed: usize,
    pub valid: usize,
    pub mvcc_conflicts: usize,
    pub rejected: usize,
    pub aborted: usize,
    /// Still in flight when the run ended.
    pub unfinished: usize,
}

/// Cross-node comparison of the honest nodes' ledgers at the end of a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SafetyReport {
    pub honest_nodes: Vec<String>,
    /// Every honest node holds the same chain.
    pub identical: bool,
    /// No two honest nodes disagree on any height both have.
    pub prefix_consistent: bool,
}

/// The serializable part of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunSummary {
    pub arm: Arm,
    pub engine: EngineKind,
    pub outcome: RunOutcome,
    /// Set when more replicas are faulty than the ordering service tolerates;
    /// safety is then not guaranteed.
    pub out_of_model: bool,
    pub safety: SafetyReport,
    pub metrics: Metrics,
}

pub struct RunReport {
    pub summary: RunSummary,
    /// One canonical-JSON line per event.
    pub transcript: Vec<String>,
    /// Honest nodes' final ledgers by node name (peers, then PBFT replicas).
    pub ledgers: Vec<(String, Ledger)>,
    /// Peers' final world states. In the baseline arm these come from serial
    /// execution rather than from blocks.
    pub final_states: Vec<(String, WorldState)>,
    /// State after bootstrap, before the workload.
    pub initial_state: WorldState,
    /// Height of the last bootstrap block.
    pub bootstrap_height: u64,
    /// Transient data of every workload transaction by txId.
    pub transients: HashMap<String, Transient>,
    /// Workload transactions in submission order with their fate.
    pub fates: Vec<(String, Option<TxFate>)>,
}

impl RunReport {
    pub fn metrics(&self) -> &Metrics {
        &self.summary.metrics
    }

    pub fn outcome(&self) -> RunOutcome {
        self.summary.outcome
    }

    pub fn transcript_text(&self) -> String {
        let mut s = self.transcript.join("\n");
        s.push('\n');
        s
    }
}

/// Runs `workload` through the execute-order-validate pipeline.
pub fn run_scenario(config: &SimConfig, workload: &Workload) -> Result<RunReport, SimError> {
    run_arm(config, workload, Arm::Pipeline)
}

pub fn run_arm(config: &SimConfig, workload: &Workload, arm: Arm) -> Result<RunReport, SimError> {
    config.validate()?;
    workload.validate()?;
    let prepared = setup::prepare(config, workload)?;
    Ok(sim::Sim::new(config, workload, arm, &prepared).run())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ParadigmSummary {
    pub baseline: RunSummary,
    pub pipeline: RunSummary,
    /// Pipeline TPS over baseline TPS; `None` if either is undefined.
    pub tps_ratio: Option<f64>,
}

pub struct ParadigmComparison {
    pub baseline: RunReport,
    pub pipeline: RunReport,
}

impl ParadigmComparison {
    pub fn summary(&self) -> ParadigmSummary {
        let ratio = match (self.pipeline.metrics().tps, self.baseline.metrics().tps) {
            (Some(p), Some(b)) if b > 0.0 => Some(p / b),
            _ => None,
        };
        ParadigmSummary {
            baseline: self.baseline.summary.clone(),
            pipeline: self.pipeline.summary.clone(),
            tps_ratio: ratio,
        }
    }
}

/// Runs the same workload and seed through the serial order-execute
/// baseline and the pipeline.
pub fn compare_paradigms(config: &SimConfig, workload: &Workload) -> Result<ParadigmComparison, SimError> {
    config.validate()?;
    workload.validate()?;
    let prepared = setup::prepare(config, workload)?;
    let baseline = sim::Sim::new(config, workload, Arm::Baseline, &prepared).run();
    let pipeline = sim::Sim::new(config, workload, Arm::Pipeline, &prepared).run();
    Ok(ParadigmComparison { baseline, pipeline })
}

/// A scenario file as read by the command line.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct Scenario {
    pub config: SimConfig,
    pub workload: Workload,
    /// Also run the serial baseline and report both arms.
    pub compare: bool,
}
