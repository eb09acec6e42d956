// SPDX-License-Identifier: Apache-2.0

//! Bootstrap ledger and pre-signed workload for a run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{SimConfig, Workload};
use crate::consensus::EngineKind;
use crate::ehr::NewRecord;
use crate::fixtures::World;
use crate::ledger::Ledger;
use crate::node::{NodeConfig, NodeError};
use crate::txflow::{Transient, TxProposal, ValidationCode};

pub const HOSPITAL_ID: &str = "H0001";
/// Holds consent from every patient and writes all appended records.
pub const DOCTOR_ID: &str = "D0000";
/// Consent grants go to a fresh doctor each, so a grant never contends on
/// anything but its patient.
pub const CONSENT_DOCTOR_PREFIX: &str = "C";

const WORKLOAD_STREAM: u64 = 0x776f_726b_6c6f_6164;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum TxKind {
    Append,
    Consent,
}

pub(crate) struct WorkloadTx {
    pub proposal: TxProposal,
    pub transient: Transient,
}

pub(crate) struct Prepared {
    pub ledger: Ledger,
    pub txs: Vec<WorkloadTx>,
}

pub(crate) fn patient_id(k: usize) -> String {
    format!("P{k:04}")
}

/// Patient index and kind of every transaction. Draws two uniforms per
/// transaction whatever the rates, so runs that differ only in rates share
/// their random stream.
pub(crate) fn plan(seed: u64, w: &Workload) -> Vec<(usize, TxKind)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ WORKLOAD_STREAM);
    let mut key = 0;
    (0..w.tx_count)
        .map(|i| {
            let same: f64 = rng.gen();
            let kind: f64 = rng.gen();
            if i > 0 && same >= w.conflict_rate {
                key = (key + 1) % w.key_count;
            }
            (key, if kind < w.consent_share { TxKind::Consent } else { TxKind::Append })
        })
        .collect()
}

pub(crate) fn prepare(config: &SimConfig, workload: &Workload) -> Result<Prepared, NodeError> {
    let plan = plan(config.seed, workload);
    let node_config = NodeConfig {
        endorsers: config.endorsers,
        policy_k: config.endorsement_k,
        orderer: EngineKind::Solo,
        batch_max: 1,
        batch_wait_ms: 0,
        key_seed: config.seed,
        ..NodeConfig::default()
    };
    let mut w = World::new(&node_config, config.seed)?;
    w.add_hospital(HOSPITAL_ID)?;
    let doctor = w.add_doctor(DOCTOR_ID, HOSPITAL_ID)?;
    let mut patients = Vec::with_capacity(workload.key_count);
    for k in 0..workload.key_count {
        let p = w.add_patient(&patient_id(k), HOSPITAL_ID)?;
        let out = w.grant(&p, DOCTOR_ID)?;
        if out.code != ValidationCode::Valid {
            return Err(NodeError::NotCommitted(out.tx_id));
        }
        patients.push(p);
    }
    let consents = plan.iter().filter(|(_, k)| *k == TxKind::Consent).count();
    for j in 0..consents {
        w.add_doctor(&format!("{CONSENT_DOCTOR_PREFIX}{j:05}"), HOSPITAL_ID)?;
    }

    let mut txs = Vec::with_capacity(plan.len());
    let mut next_consent = 0;
    for (i, (key, kind)) in plan.into_iter().enumerate() {
        let (proposal, transient) = match kind {
            TxKind::Append => {
                let symptom = format!("S{i:06}");
                let record = NewRecord {
                    record_id: format!("R{i:06}"),
                    patient_id: patient_id(key),
                    doctor_id: DOCTOR_ID.into(),
                    hospital_id: HOSPITAL_ID.into(),
                    note: format!("visit {i} observed {symptom}"),
                    symptom_ids: vec![symptom],
                    symptom_names: Default::default(),
                };
                w.record_proposal(&doctor, &record)
            }
            TxKind::Consent => {
                let d = format!("{CONSENT_DOCTOR_PREFIX}{next_consent:05}");
                next_consent += 1;
                w.consent_proposal(&patients[key], &d, true)
            }
        };
        txs.push(WorkloadTx { proposal, transient });
    }
    Ok(Prepared { ledger: w.node.ledger().snapshot(), txs })
}
