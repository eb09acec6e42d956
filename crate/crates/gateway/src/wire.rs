// SPDX-License-Identifier: Apache-2.0

//! Request and response bodies, and the chaincode call each write request
//! becomes. HTTP handlers and CLI subcommands share these mappings.

use std::collections::BTreeMap;

use quebian_core::codec::to_canonical;
use quebian_core::crypto::Hash;
use quebian_core::ehr::{
    self, ConsentRequest, DoctorRegistration, HospitalRegistration, MedicalRecord, NewRecord,
    PatientRegistration,
};
use quebian_core::identity::{
    self, CredentialDefinition, DidKey, Nonce, Presentation, RejectReason, Schema,
};
use quebian_core::ledger::{Block, BlockHeader, ChainReport, WorldState};
use quebian_core::txflow::{EndorsedTransaction, Transient, ValidationCode};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

/// A chaincode invocation ready to be signed by the gateway.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Call {
    pub function: &'static str,
    pub args: Vec<String>,
    pub transient: Transient,
}

impl Call {
    fn plain(function: &'static str, args: Vec<String>) -> Self {
        Call { function, args, transient: Transient::new() }
    }

    fn authenticated(function: &'static str, args: Vec<String>, pres: &Presentation) -> Self {
        Call { function, args, transient: ehr::presentation_transient(pres) }
    }
}

fn canonical_string<T: Serialize>(v: &T) -> String {
    String::from_utf8(to_canonical(v).expect("identity artifacts hold no floats")).expect("canonical JSON is UTF-8")
}

pub fn register_hospital(reg: &HospitalRegistration) -> Call {
    Call::plain(ehr::REGISTER_HOSPITAL, ehr::json_args(reg))
}

pub fn register_doctor(reg: &DoctorRegistration) -> Call {
    Call::plain(ehr::REGISTER_DOCTOR, ehr::json_args(reg))
}

pub fn register_patient(reg: &PatientRegistration) -> Call {
    Call::plain(ehr::REGISTER_PATIENT, ehr::json_args(reg))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RecordRequest {
    pub record: NewRecord,
    /// Presentation of the writing doctor.
    pub presentation: Presentation,
}

impl RecordRequest {
    pub fn call(&self) -> Call {
        Call::authenticated(ehr::APPEND_RECORD, ehr::json_args(&self.record), &self.presentation)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ConsentBody {
    pub patient_id: String,
    pub doctor_id: String,
    /// Presentation of the patient.
    pub presentation: Presentation,
}

impl ConsentBody {
    pub fn call(&self, grant: bool) -> Call {
        let req = ConsentRequest { patient_id: self.patient_id.clone(), doctor_id: self.doctor_id.clone() };
        let f = if grant { ehr::GRANT_CONSENT } else { ehr::REVOKE_CONSENT };
        Call::authenticated(f, ehr::json_args(&req), &self.presentation)
    }
}

/// `proof` is the registrant's signature; see [`identity::register_did_args`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DidRequest {
    pub did: String,
    pub verification_key: String,
    pub role: String,
    pub proof: String,
}

impl DidRequest {
    pub fn signed(key: &DidKey) -> Self {
        let [did, verification_key, role, proof]: [String; 4] =
            identity::register_did_args(key).try_into().expect("four args");
        DidRequest { did, verification_key, role, proof }
    }

    pub fn call(&self) -> Call {
        let args = vec![self.did.clone(), self.verification_key.clone(), self.role.clone(), self.proof.clone()];
        Call::plain(identity::REGISTER_DID, args)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SchemaRequest {
    pub issuer_did: String,
    pub schema: Schema,
    pub signature: String,
}

impl SchemaRequest {
    pub fn signed(issuer: &DidKey, schema: &Schema) -> Self {
        let args = identity::publish_schema_args(issuer, schema);
        SchemaRequest { issuer_did: issuer.did.clone(), schema: schema.clone(), signature: args[2].clone() }
    }

    pub fn call(&self) -> Call {
        let args = vec![self.issuer_did.clone(), canonical_string(&self.schema), self.signature.clone()];
        Call::plain(identity::PUBLISH_SCHEMA, args)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CredDefRequest {
    pub issuer_did: String,
    pub cred_def: CredentialDefinition,
    pub signature: String,
}

impl CredDefRequest {
    pub fn signed(issuer: &DidKey, cred_def: &CredentialDefinition) -> Self {
        let args = identity::publish_cred_def_args(issuer, cred_def);
        CredDefRequest { issuer_did: issuer.did.clone(), cred_def: cred_def.clone(), signature: args[2].clone() }
    }

    pub fn call(&self) -> Call {
        let args = vec![self.issuer_did.clone(), canonical_string(&self.cred_def), self.signature.clone()];
        Call::plain(identity::PUBLISH_CRED_DEF, args)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RevocationRequest {
    pub issuer_did: String,
    pub cred_def_id: String,
    pub cred_id: String,
    pub signature: String,
}

impl RevocationRequest {
    pub fn signed(issuer: &DidKey, cred_def_id: &str, cred_id: &str) -> Self {
        let args = identity::revoke_credential_args(issuer, cred_def_id, cred_id);
        RevocationRequest {
            issuer_did: issuer.did.clone(),
            cred_def_id: cred_def_id.into(),
            cred_id: cred_id.into(),
            signature: args[3].clone(),
        }
    }

    pub fn call(&self) -> Call {
        let args =
            vec![self.issuer_did.clone(), self.cred_def_id.clone(), self.cred_id.clone(), self.signature.clone()];
        Call::plain(identity::REVOKE_CREDENTIAL, args)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct VerifyRequest {
    pub presentation: Presentation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerifyResponse {
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Disclosed attribute values of an accepted presentation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disclosed: Option<BTreeMap<String, String>>,
}

impl VerifyResponse {
    pub fn from_result(pres: &Presentation, result: Result<(), RejectReason>) -> Self {
        match result {
            Ok(()) => VerifyResponse {
                accepted: true,
                reason: None,
                disclosed: Some(pres.disclosed.iter().map(|(k, d)| (k.clone(), d.value.clone())).collect()),
            },
            Err(r) => VerifyResponse { accepted: false, reason: Some(r.as_str().into()), disclosed: None },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonceResponse {
    pub nonce: Nonce,
}

/// Query string of `GET /records`: exactly one of `patientId` and
/// `symptomId`, plus optional paging.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RecordQuery {
    pub patient_id: Option<String>,
    pub symptom_id: Option<String>,
    pub limit: Option<usize>,
    pub offset: Option<usize>,
}

impl RecordQuery {
    pub fn run(&self, state: &WorldState) -> Result<Vec<MedicalRecord>, ApiError> {
        let all = match (&self.patient_id, &self.symptom_id) {
            (Some(p), None) => ehr::query_by_patient(state, p),
            (None, Some(s)) => ehr::query_by_symptom(state, s),
            _ => return Err(ApiError::bad_request("give exactly one of patientId and symptomId")),
        };
        Ok(all
            .into_iter()
            .skip(self.offset.unwrap_or(0))
            .take(self.limit.unwrap_or(usize::MAX))
            .collect())
    }
}

/// A block with its header hash.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BlockView {
    pub hash: Hash,
    pub header: BlockHeader,
    pub txs: Vec<EndorsedTransaction>,
    pub validation: Vec<ValidationCode>,
}

impl From<&Block> for BlockView {
    fn from(b: &Block) -> Self {
        BlockView { hash: b.hash(), header: b.header.clone(), txs: b.txs.clone(), validation: b.validation.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerifyChainResponse {
    pub ok: bool,
    /// Tip height when intact, otherwise the first bad height.
    pub height: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl From<ChainReport> for VerifyChainResponse {
    fn from(r: ChainReport) -> Self {
        match r {
            ChainReport::Ok { height } => VerifyChainResponse { ok: true, height, reason: None },
            ChainReport::Tampered { height, reason } => VerifyChainResponse { ok: false, height, reason: Some(reason) },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TxState {
    Pending,
    Committed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TxStatus {
    pub tx_id: String,
    pub status: TxState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<ValidationCode>,
}
