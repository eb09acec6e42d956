// SPDX-License-Identifier: Apache-2.0

//! A populated network for tests, simulations and demos: one issuer, a
//! membership schema and credential definition, and hospitals, doctors and
//! patients that each hold a credential. Everything is derived from one seed.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::ehr::{self, ConsentRequest, DoctorRegistration, HospitalRegistration, NewRecord, PatientRegistration};
use crate::crypto::{Hash, Signature};
use crate::identity::{
    self, chaincode as iam, create_presentation, issue_credential, Credential, CredentialDefinition, DidKey,
    DisclosedAttr, Nonce, Presentation, Role, Salt, Schema,
};
use crate::ledger::Ledger;
use crate::node::{Node, NodeConfig, NodeError, TxOutcome};
use crate::txflow::{Transient, TxProposal};

pub const SCHEMA_ID: &str = "schema-member-1";
pub const CRED_DEF_ID: &str = "creddef-member-1";
/// Every fixture attribute value is random hex, so a byte search of the
/// ledger for it cannot hit by accident.
pub const MEMBER_ATTRS: [&str; 3] = ["dob", "licenseNo", "name"];

/// A registered principal with its wallet.
#[derive(Clone, Debug)]
pub struct Member {
    pub id: String,
    pub key: DidKey,
    pub credential: Credential,
}

pub struct World {
    pub node: Node,
    pub issuer: DidKey,
    pub admin: DidKey,
    rng: ChaCha20Rng,
    clock_ms: u64,
}

impl World {
    /// Creates an in-memory node and commits the issuer, schema and
    /// credential definition.
    pub fn new(config: &NodeConfig, seed: u64) -> Result<Self, NodeError> {
        Self::with_ledger(Ledger::in_memory(0), config, seed)
    }

    pub fn with_ledger(ledger: Ledger, config: &NodeConfig, seed: u64) -> Result<Self, NodeError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let issuer = DidKey::generate(Role::Issuer, &mut rng);
        let admin = DidKey::generate(Role::Verifier, &mut rng);
        let mut w = World { node: Node::new(ledger, config)?, issuer, admin, rng, clock_ms: 0 };
        if w.node.ledger().state().get(&identity::cred_def_key(CRED_DEF_ID)).is_none() {
            w.register_did(&w.issuer.clone())?;
            w.register_did(&w.admin.clone())?;
            let schema = Schema {
                schema_id: SCHEMA_ID.into(),
                name: "membership".into(),
                version: "1.0".into(),
                attr_names: MEMBER_ATTRS.iter().map(|s| s.to_string()).collect(),
            };
            w.expect_valid(iam::PUBLISH_SCHEMA, iam::publish_schema_args(&w.issuer, &schema), None)?;
            let cd = CredentialDefinition {
                cred_def_id: CRED_DEF_ID.into(),
                issuer_did: w.issuer.did.clone(),
                schema_id: SCHEMA_ID.into(),
            };
            w.expect_valid(iam::PUBLISH_CRED_DEF, iam::publish_cred_def_args(&w.issuer, &cd), None)?;
        }
        Ok(w)
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    pub fn now(&self) -> u64 {
        self.clock_ms
    }

    pub fn next_tx_id(&mut self) -> String {
        format!("tx-{:016x}", self.rng.next_u64())
    }

    pub fn fresh_nonce(&mut self) -> Nonce {
        Nonce::random(&mut self.rng)
    }

    /// Builds a signed proposal without submitting it.
    pub fn proposal(&mut self, actor: &DidKey, function: &str, args: Vec<String>, transient: &Transient) -> TxProposal {
        let tx_id = self.next_tx_id();
        TxProposal::new_signed(tx_id, function, args, actor.did.clone(), transient, &actor.secret_key)
    }

    /// Endorses, orders and commits one call as `actor`.
    pub fn invoke(
        &mut self,
        actor: &DidKey,
        function: &str,
        args: Vec<String>,
        transient: &Transient,
    ) -> Result<TxOutcome, NodeError> {
        let p = self.proposal(actor, function, args, transient);
        self.clock_ms += 1;
        self.node.execute(p, transient, self.clock_ms)
    }

    fn expect_valid(&mut self, function: &str, args: Vec<String>, actor: Option<&DidKey>) -> Result<(), NodeError> {
        let actor = actor.cloned().unwrap_or_else(|| self.issuer.clone());
        let out = self.invoke(&actor, function, args, &Transient::new())?;
        if out.code != crate::txflow::ValidationCode::Valid {
            return Err(NodeError::NotCommitted(format!("{} ({})", out.tx_id, out.code.as_str())));
        }
        Ok(())
    }

    pub fn register_did(&mut self, key: &DidKey) -> Result<(), NodeError> {
        self.expect_valid(iam::REGISTER_DID, iam::register_did_args(key), Some(key))
    }

    /// Issues a membership credential with random attribute values.
    pub fn issue(&mut self, holder: &DidKey) -> Credential {
        let attrs: BTreeMap<String, String> = MEMBER_ATTRS
            .iter()
            .map(|name| {
                let mut raw = [0u8; 12];
                self.rng.fill_bytes(&mut raw);
                (name.to_string(), format!("{name}:{}", hex::encode(raw)))
            })
            .collect();
        issue_credential(&self.issuer.secret_key, self.node.ledger().state(), CRED_DEF_ID, &holder.did, attrs, &mut self.rng)
            .expect("fixture credential definition is on-ledger")
    }

    /// Creates a DID, registers it and issues a credential for it.
    pub fn new_member(&mut self, id: &str, role: Role) -> Result<Member, NodeError> {
        let key = DidKey::generate(role, &mut self.rng);
        self.register_did(&key)?;
        let credential = self.issue(&key);
        Ok(Member { id: id.to_string(), key, credential })
    }

    /// A presentation revealing nothing, wrapped as transient data.
    pub fn auth_transient(&mut self, member: &Member) -> Transient {
        let nonce = self.fresh_nonce();
        let pres = create_presentation(&member.credential, &member.key.secret_key, &[], nonce).expect("no attrs");
        ehr::presentation_transient(&pres)
    }

    pub fn add_hospital(&mut self, hospital_id: &str) -> Result<(), NodeError> {
        let reg = HospitalRegistration {
            hospital_id: hospital_id.into(),
            address: format!("{hospital_id} street 1"),
            phone: "555-0100".into(),
            departments: vec!["general".into()],
        };
        let admin = self.admin.clone();
        self.expect_valid(ehr::chaincode::REGISTER_HOSPITAL, ehr::json_args(&reg), Some(&admin))
    }

    pub fn add_doctor(&mut self, doctor_id: &str, hospital_id: &str) -> Result<Member, NodeError> {
        let m = self.new_member(doctor_id, Role::Holder)?;
        let reg = DoctorRegistration {
            doctor_id: doctor_id.into(),
            did: m.key.did.clone(),
            demographics: Default::default(),
            hospital_id: hospital_id.into(),
        };
        let admin = self.admin.clone();
        self.expect_valid(ehr::chaincode::REGISTER_DOCTOR, ehr::json_args(&reg), Some(&admin))?;
        Ok(m)
    }

    pub fn add_patient(&mut self, patient_id: &str, hospital_id: &str) -> Result<Member, NodeError> {
        let m = self.new_member(patient_id, Role::Holder)?;
        let reg = PatientRegistration {
            patient_id: patient_id.into(),
            did: m.key.did.clone(),
            demographics: Default::default(),
            hospital_id: hospital_id.into(),
        };
        let admin = self.admin.clone();
        self.expect_valid(ehr::chaincode::REGISTER_PATIENT, ehr::json_args(&reg), Some(&admin))?;
        Ok(m)
    }

    pub fn consent_proposal(&mut self, patient: &Member, doctor_id: &str, grant: bool) -> (TxProposal, Transient) {
        let req = ConsentRequest { patient_id: patient.id.clone(), doctor_id: doctor_id.into() };
        let f = if grant { ehr::chaincode::GRANT_CONSENT } else { ehr::chaincode::REVOKE_CONSENT };
        let t = self.auth_transient(patient);
        let p = self.proposal(&patient.key, f, ehr::json_args(&req), &t);
        (p, t)
    }

    pub fn grant(&mut self, patient: &Member, doctor_id: &str) -> Result<TxOutcome, NodeError> {
        let (p, t) = self.consent_proposal(patient, doctor_id, true);
        self.clock_ms += 1;
        self.node.execute(p, &t, self.clock_ms)
    }

    pub fn revoke(&mut self, patient: &Member, doctor_id: &str) -> Result<TxOutcome, NodeError> {
        let (p, t) = self.consent_proposal(patient, doctor_id, false);
        self.clock_ms += 1;
        self.node.execute(p, &t, self.clock_ms)
    }

    pub fn record_proposal(&mut self, doctor: &Member, record: &NewRecord) -> (TxProposal, Transient) {
        let t = self.auth_transient(doctor);
        let p = self.proposal(&doctor.key, ehr::chaincode::APPEND_RECORD, ehr::json_args(record), &t);
        (p, t)
    }

    pub fn append(&mut self, doctor: &Member, record: &NewRecord) -> Result<TxOutcome, NodeError> {
        let (p, t) = self.record_proposal(doctor, record);
        self.clock_ms += 1;
        self.node.execute(p, &t, self.clock_ms)
    }
}

/// A record with one symptom and a generated note.
pub fn simple_record(record_id: &str, patient: &str, doctor: &str, hospital: &str, symptom: &str) -> NewRecord {
    NewRecord {
        record_id: record_id.into(),
        patient_id: patient.into(),
        doctor_id: doctor.into(),
        hospital_id: hospital.into(),
        symptom_ids: vec![symptom.into()],
        note: format!("{record_id} observed {symptom}"),
        symptom_names: Default::default(),
    }
}

fn alter_str(s: &str, k: usize) -> String {
    let mut chars: Vec<char> = s.chars().collect();
    if chars.is_empty() {
        return "x".into();
    }
    let i = k % chars.len();
    chars[i] = if chars[i] == 'x' { 'y' } else { 'x' };
    chars.into_iter().collect()
}

fn flip<const N: usize>(mut bytes: [u8; N], k: usize) -> [u8; N] {
    bytes[(k / 8) % N] ^= 1 << (k % 8);
    bytes
}

/// The `k`-th single-field mutation of a presentation, cycling through every
/// field. Needs at least one disclosed attribute.
pub fn mutate_presentation(p: &Presentation, k: usize) -> (&'static str, Presentation) {
    let mut m = p.clone();
    let names: Vec<String> = m.disclosed.keys().cloned().collect();
    let all: Vec<String> = m.digests.keys().cloned().collect();
    let disclosed = &names[k % names.len()];
    let variant = k / 11;
    let label = match k % 11 {
        0 => {
            m.cred_id = alter_str(&m.cred_id, variant);
            "credId"
        }
        1 => {
            m.cred_def_id = alter_str(&m.cred_def_id, variant);
            "credDefId"
        }
        2 => {
            m.holder_did = alter_str(&m.holder_did, variant + 8);
            "holderDid"
        }
        3 => {
            let d = m.disclosed.get_mut(disclosed).unwrap();
            d.value = alter_str(&d.value, variant);
            "disclosed value"
        }
        4 => {
            let d = m.disclosed.get_mut(disclosed).unwrap();
            d.salt = Salt(flip(d.salt.0, variant));
            "disclosed salt"
        }
        5 => {
            let name = &all[variant % all.len()];
            let h = m.digests[name];
            m.digests.insert(name.clone(), Hash::from_bytes(flip(*h.as_bytes(), variant)));
            "digest"
        }
        6 => {
            m.nonce = Nonce(flip(m.nonce.0, variant));
            "nonce"
        }
        7 => {
            m.issuer_signature = Signature::from_bytes(flip(m.issuer_signature.to_bytes(), variant));
            "issuerSignature"
        }
        8 => {
            m.holder_signature = Signature::from_bytes(flip(m.holder_signature.to_bytes(), variant));
            "holderSignature"
        }
        9 => {
            m.disclosed.remove(disclosed);
            "disclosed set (removed)"
        }
        _ => {
            // Claim an undisclosed attribute with a made-up value.
            let hidden = all.iter().find(|a| !m.disclosed.contains_key(*a)).unwrap_or(disclosed).clone();
            m.disclosed.insert(hidden, DisclosedAttr { value: format!("forged-{variant}"), salt: Salt([variant as u8; 16]) });
            "disclosed set (added)"
        }
    };
    (label, m)
}
