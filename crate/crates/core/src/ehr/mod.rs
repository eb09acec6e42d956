// SPDX-License-Identifier: Apache-2.0

//! Electronic health record chaincode: hospitals, doctors and patients,
//! append-only medical records with patient and symptom indexes, and
//! per-(patient, doctor) consent.
//!
//! State layout:
//!
//! ```text
//! ehr/hospital/<hospitalId>
//! ehr/doctor/<doctorId>
//! ehr/patient/<patientId>
//! ehr/record/<recordId>
//! ehr/consent/<patientId>/<doctorId>
//! ehr/idx/patient/<patientId>/<recordId>
//! ehr/idx/symptom/<symptomId>/<recordId>
//! ```

pub mod chaincode;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use chaincode::{
    register_chaincode, APPEND_RECORD, FUNCTIONS, GRANT_CONSENT, PRESENTATION, REGISTER_DOCTOR,
    REGISTER_HOSPITAL, REGISTER_PATIENT, REVOKE_CONSENT,
};

use crate::identity::Presentation;
use crate::ledger::{Version, WorldState};
use crate::txflow::Transient;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Hospital {
    pub hospital_id: String,
    pub address: String,
    pub phone: String,
    pub departments: Vec<String>,
    #[serde(default)]
    pub doctor_ids: Vec<String>,
    #[serde(default)]
    pub patient_ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Doctor {
    pub doctor_id: String,
    pub did: String,
    #[serde(default)]
    pub demographics: BTreeMap<String, String>,
    #[serde(default)]
    pub patient_ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Patient {
    pub patient_id: String,
    pub did: String,
    #[serde(default)]
    pub demographics: BTreeMap<String, String>,
    #[serde(default)]
    pub symptom_ids: Vec<String>,
    #[serde(default)]
    pub symptom_names: BTreeMap<String, String>,
}

/// Registration payload for doctors: the entity plus the hospital it joins.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DoctorRegistration {
    pub doctor_id: String,
    pub did: String,
    #[serde(default)]
    pub demographics: BTreeMap<String, String>,
    pub hospital_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PatientRegistration {
    pub patient_id: String,
    pub did: String,
    #[serde(default)]
    pub demographics: BTreeMap<String, String>,
    pub hospital_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct HospitalRegistration {
    pub hospital_id: String,
    pub address: String,
    pub phone: String,
    #[serde(default)]
    pub departments: Vec<String>,
}

/// Fields of a new medical record as submitted by a doctor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct NewRecord {
    pub record_id: String,
    pub patient_id: String,
    pub doctor_id: String,
    pub hospital_id: String,
    pub symptom_ids: Vec<String>,
    pub note: String,
    /// Display names for symptoms not yet known for this patient.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub symptom_names: BTreeMap<String, String>,
}

/// The stored record body under `ehr/record/<recordId>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RecordBody {
    pub record_id: String,
    pub patient_id: String,
    pub doctor_id: String,
    pub hospital_id: String,
    pub symptom_ids: Vec<String>,
    pub note: String,
}

/// A committed record; `createdAt` is the version of its record key.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MedicalRecord {
    #[serde(flatten)]
    pub body: RecordBody,
    pub created_at: Version,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConsentStatus {
    Active,
    Revoked,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Consent {
    pub patient_id: String,
    pub doctor_id: String,
    pub status: ConsentStatus,
}

/// Consent request payload; authentication is the attached presentation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ConsentRequest {
    pub patient_id: String,
    pub doctor_id: String,
}

pub fn hospital_key(id: &str) -> String {
    format!("ehr/hospital/{id}")
}

pub fn doctor_key(id: &str) -> String {
    format!("ehr/doctor/{id}")
}

pub fn patient_key(id: &str) -> String {
    format!("ehr/patient/{id}")
}

pub fn record_key(id: &str) -> String {
    format!("ehr/record/{id}")
}

pub fn consent_key(patient_id: &str, doctor_id: &str) -> String {
    format!("ehr/consent/{patient_id}/{doctor_id}")
}

pub fn patient_index_prefix(patient_id: &str) -> String {
    format!("ehr/idx/patient/{patient_id}/")
}

pub fn symptom_index_prefix(symptom_id: &str) -> String {
    format!("ehr/idx/symptom/{symptom_id}/")
}

/// Transient map carrying a presentation to the chaincode.
pub fn presentation_transient(pres: &Presentation) -> Transient {
    let body = String::from_utf8(crate::codec::canonical_bytes(pres)).expect("utf8");
    Transient::from([(PRESENTATION.to_string(), body)])
}

/// Single JSON argument in canonical form.
pub fn json_args<T: Serialize>(payload: &T) -> Vec<String> {
    vec![String::from_utf8(crate::codec::canonical_bytes(payload)).expect("utf8")]
}

fn get<T: serde::de::DeserializeOwned>(state: &WorldState, key: &str) -> Option<T> {
    state.get(key).and_then(|v| serde_json::from_slice(&v.value).ok())
}

pub fn get_hospital(state: &WorldState, id: &str) -> Option<Hospital> {
    get(state, &hospital_key(id))
}

pub fn get_doctor(state: &WorldState, id: &str) -> Option<Doctor> {
    get(state, &doctor_key(id))
}

pub fn get_patient(state: &WorldState, id: &str) -> Option<Patient> {
    get(state, &patient_key(id))
}

pub fn get_consent(state: &WorldState, patient_id: &str, doctor_id: &str) -> Option<Consent> {
    get(state, &consent_key(patient_id, doctor_id))
}

pub fn get_record(state: &WorldState, record_id: &str) -> Option<MedicalRecord> {
    let vv = state.get(&record_key(record_id))?;
    let body: RecordBody = serde_json::from_slice(&vv.value).ok()?;
    Some(MedicalRecord { body, created_at: vv.version })
}

fn query_index(state: &WorldState, prefix: &str) -> Vec<MedicalRecord> {
    let mut out: Vec<MedicalRecord> = state
        .scan_prefix(prefix)
        .filter_map(|(k, _)| get_record(state, &k[prefix.len()..]))
        .collect();
    out.sort_by_key(|r| r.created_at);
    out
}

/// All committed records of a patient, in commit order. Unknown ids yield an
/// empty list.
pub fn query_by_patient(state: &WorldState, patient_id: &str) -> Vec<MedicalRecord> {
    if crate::identity::valid_id(patient_id).is_err() {
        return Vec::new();
    }
    query_index(state, &patient_index_prefix(patient_id))
}

/// All committed records mentioning a symptom, in commit order.
pub fn query_by_symptom(state: &WorldState, symptom_id: &str) -> Vec<MedicalRecord> {
    if crate::identity::valid_id(symptom_id).is_err() {
        return Vec::new();
    }
    query_index(state, &symptom_index_prefix(symptom_id))
}
