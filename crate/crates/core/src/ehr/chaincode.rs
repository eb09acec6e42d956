// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use super::{
    consent_key, doctor_key, hospital_key, patient_index_prefix, patient_key, record_key,
    symptom_index_prefix, Consent, ConsentRequest, ConsentStatus, Doctor, DoctorRegistration,
    Hospital, HospitalRegistration, NewRecord, Patient, PatientRegistration, RecordBody,
};
use crate::identity::{self, did_key, nonce_key, valid_id, Presentation};
use crate::txflow::{ChaincodeError, ChaincodeRegistry, TxContext};

pub const REGISTER_HOSPITAL: &str = "register_hospital";
pub const REGISTER_DOCTOR: &str = "register_doctor";
pub const REGISTER_PATIENT: &str = "register_patient";
pub const APPEND_RECORD: &str = "append_record";
pub const GRANT_CONSENT: &str = "grant_consent";
pub const REVOKE_CONSENT: &str = "revoke_consent";

/// The complete EHR function table. Records have an append operation and
/// nothing else.
pub const FUNCTIONS: [&str; 6] =
    [REGISTER_HOSPITAL, REGISTER_DOCTOR, REGISTER_PATIENT, APPEND_RECORD, GRANT_CONSENT, REVOKE_CONSENT];

/// Transient key under which callers attach their presentation.
pub const PRESENTATION: &str = "presentation";

pub fn register_chaincode(registry: &mut ChaincodeRegistry) {
    registry.register(REGISTER_HOSPITAL, register_hospital);
    registry.register(REGISTER_DOCTOR, register_doctor);
    registry.register(REGISTER_PATIENT, register_patient);
    registry.register(APPEND_RECORD, append_record);
    registry.register(GRANT_CONSENT, grant_consent);
    registry.register(REVOKE_CONSENT, revoke_consent);
}

fn check_id(id: &str) -> Result<(), ChaincodeError> {
    valid_id(id).map_err(ChaincodeError::bad_request)
}

fn require<T: serde::de::DeserializeOwned>(
    ctx: &mut TxContext<'_>,
    key: &str,
    what: &str,
) -> Result<T, ChaincodeError> {
    ctx.get_json(key)?.ok_or_else(|| ChaincodeError::not_found(format!("{what} not registered")))
}

fn require_absent(ctx: &mut TxContext<'_>, key: &str, what: &str) -> Result<(), ChaincodeError> {
    match ctx.get_state(key) {
        Some(_) => Err(ChaincodeError::conflict(format!("{what} already exists"))),
        None => Ok(()),
    }
}

/// Verifies the attached presentation, binds it to `did`, and consumes its
/// nonce so the same presentation cannot be replayed in another transaction.
fn authenticate(ctx: &mut TxContext<'_>, did: &str) -> Result<(), ChaincodeError> {
    let raw = ctx
        .transient(PRESENTATION)
        .ok_or_else(|| ChaincodeError::auth("no presentation attached"))?
        .to_string();
    let pres: Presentation =
        serde_json::from_str(&raw).map_err(|e| ChaincodeError::auth(format!("malformed presentation: {e}")))?;
    if pres.holder_did != did {
        return Err(ChaincodeError::auth("presentation belongs to a different holder"));
    }
    identity::verify_presentation(&pres, ctx, None)
        .map_err(|reason| ChaincodeError::auth(format!("presentation rejected: {reason}")))?;
    let nk = nonce_key(&pres.nonce);
    if ctx.get_state(&nk).is_some() {
        return Err(ChaincodeError::auth("presentation nonce already used"));
    }
    ctx.put_state(nk, ctx.tx_id().as_bytes().to_vec());
    Ok(())
}

fn register_hospital(ctx: &mut TxContext<'_>) -> Result<(), ChaincodeError> {
    let reg: HospitalRegistration = ctx.arg_json(0)?;
    check_id(&reg.hospital_id)?;
    let k = hospital_key(&reg.hospital_id);
    require_absent(ctx, &k, &format!("hospital {}", reg.hospital_id))?;
    ctx.put_json(
        k,
        &Hospital {
            hospital_id: reg.hospital_id,
            address: reg.address,
            phone: reg.phone,
            departments: reg.departments,
            doctor_ids: Vec::new(),
            patient_ids: Vec::new(),
        },
    );
    Ok(())
}

fn register_doctor(ctx: &mut TxContext<'_>) -> Result<(), ChaincodeError> {
    let reg: DoctorRegistration = ctx.arg_json(0)?;
    check_id(&reg.doctor_id)?;
    let k = doctor_key(&reg.doctor_id);
    require_absent(ctx, &k, &format!("doctor {}", reg.doctor_id))?;
    if ctx.get_state(&did_key(&reg.did)).is_none() {
        return Err(ChaincodeError::not_found(format!("DID {} not registered", reg.did)));
    }
    let hk = hospital_key(&reg.hospital_id);
    let mut hospital: Hospital = require(ctx, &hk, &format!("hospital {}", reg.hospital_id))?;
    hospital.doctor_ids.push(reg.doctor_id.clone());
    ctx.put_json(hk, &hospital);
    ctx.put_json(
        k,
        &Doctor { doctor_id: reg.doctor_id, did: reg.did, demographics: reg.demographics, patient_ids: Vec::new() },
    );
    Ok(())
}

fn register_patient(ctx: &mut TxContext<'_>) -> Result<(), ChaincodeError> {
    let reg: PatientRegistration = ctx.arg_json(0)?;
    check_id(&reg.patient_id)?;
    let k = patient_key(&reg.patient_id);
    require_absent(ctx, &k, &format!("patient {}", reg.patient_id))?;
    if ctx.get_state(&did_key(&reg.did)).is_none() {
        return Err(ChaincodeError::not_found(format!("DID {} not registered", reg.did)));
    }
    let hk = hospital_key(&reg.hospital_id);
    let mut hospital: Hospital = require(ctx, &hk, &format!("hospital {}", reg.hospital_id))?;
    hospital.patient_ids.push(reg.patient_id.clone());
    ctx.put_json(hk, &hospital);
    ctx.put_json(
        k,
        &Patient {
            patient_id: reg.patient_id,
            did: reg.did,
            demographics: reg.demographics,
            symptom_ids: Vec::new(),
            symptom_names: Default::default(),
        },
    );
    Ok(())
}

fn append_record(ctx: &mut TxContext<'_>) -> Result<(), ChaincodeError> {
    let rec: NewRecord = ctx.arg_json(0)?;
    for id in [&rec.record_id, &rec.patient_id, &rec.doctor_id, &rec.hospital_id] {
        check_id(id)?;
    }
    if rec.symptom_ids.is_empty() {
        return Err(ChaincodeError::bad_request("a record needs at least one symptom"));
    }
    let mut unique = BTreeSet::new();
    for s in &rec.symptom_ids {
        check_id(s)?;
        if !unique.insert(s.as_str()) {
            return Err(ChaincodeError::bad_request(format!("duplicate symptom {s}")));
        }
    }
    if let Some(extra) = rec.symptom_names.keys().find(|k| !unique.contains(k.as_str())) {
        return Err(ChaincodeError::bad_request(format!("name given for unlisted symptom {extra}")));
    }

    let doctor: Doctor = require(ctx, &doctor_key(&rec.doctor_id), &format!("doctor {}", rec.doctor_id))?;
    authenticate(ctx, &doctor.did)?;
    let pk = patient_key(&rec.patient_id);
    let mut patient: Patient = require(ctx, &pk, &format!("patient {}", rec.patient_id))?;
    let _: Hospital = require(ctx, &hospital_key(&rec.hospital_id), &format!("hospital {}", rec.hospital_id))?;
    let consent: Option<Consent> = ctx.get_json(&consent_key(&rec.patient_id, &rec.doctor_id))?;
    if consent.map(|c| c.status) != Some(ConsentStatus::Active) {
        return Err(ChaincodeError::consent(format!(
            "no active consent from {} for {}",
            rec.patient_id, rec.doctor_id
        )));
    }
    let rk = record_key(&rec.record_id);
    require_absent(ctx, &rk, &format!("record {}", rec.record_id))?;

    let mut patient_changed = false;
    for s in &rec.symptom_ids {
        if !patient.symptom_ids.contains(s) {
            patient.symptom_ids.push(s.clone());
            patient_changed = true;
        }
        if let Some(name) = rec.symptom_names.get(s) {
            if !patient.symptom_names.contains_key(s) {
                patient.symptom_names.insert(s.clone(), name.clone());
                patient_changed = true;
            }
        }
    }
    if patient_changed {
        ctx.put_json(pk, &patient);
    }
    let id_bytes = rec.record_id.as_bytes().to_vec();
    ctx.put_state(format!("{}{}", patient_index_prefix(&rec.patient_id), rec.record_id), id_bytes.clone());
    for s in &rec.symptom_ids {
        ctx.put_state(format!("{}{}", symptom_index_prefix(s), rec.record_id), id_bytes.clone());
    }
    ctx.put_json(
        rk,
        &RecordBody {
            record_id: rec.record_id,
            patient_id: rec.patient_id,
            doctor_id: rec.doctor_id,
            hospital_id: rec.hospital_id,
            symptom_ids: rec.symptom_ids,
            note: rec.note,
        },
    );
    Ok(())
}

fn load_consent_parties(
    ctx: &mut TxContext<'_>,
) -> Result<(ConsentRequest, Patient, Option<Consent>), ChaincodeError> {
    let req: ConsentRequest = ctx.arg_json(0)?;
    check_id(&req.patient_id)?;
    check_id(&req.doctor_id)?;
    let patient: Patient = require(ctx, &patient_key(&req.patient_id), &format!("patient {}", req.patient_id))?;
    authenticate(ctx, &patient.did)?;
    if ctx.get_state(&doctor_key(&req.doctor_id)).is_none() {
        return Err(ChaincodeError::not_found(format!("doctor {} not registered", req.doctor_id)));
    }
    let existing = ctx.get_json(&consent_key(&req.patient_id, &req.doctor_id))?;
    Ok((req, patient, existing))
}

fn grant_consent(ctx: &mut TxContext<'_>) -> Result<(), ChaincodeError> {
    let (req, _patient, existing) = load_consent_parties(ctx)?;
    if existing.as_ref().map(|c| c.status) == Some(ConsentStatus::Active) {
        return Err(ChaincodeError::conflict("consent already active"));
    }
    if existing.is_none() {
        let dk = doctor_key(&req.doctor_id);
        let mut doctor: Doctor = require(ctx, &dk, "doctor")?;
        if !doctor.patient_ids.contains(&req.patient_id) {
            doctor.patient_ids.push(req.patient_id.clone());
            ctx.put_json(dk, &doctor);
        }
    }
    ctx.put_json(
        consent_key(&req.patient_id, &req.doctor_id),
        &Consent { patient_id: req.patient_id, doctor_id: req.doctor_id, status: ConsentStatus::Active },
    );
    Ok(())
}

fn revoke_consent(ctx: &mut TxContext<'_>) -> Result<(), ChaincodeError> {
    let (req, _patient, existing) = load_consent_parties(ctx)?;
    match existing.map(|c| c.status) {
        None => Err(ChaincodeError::not_found("unknown consent")),
        Some(ConsentStatus::Revoked) => Err(ChaincodeError::conflict("consent already revoked")),
        Some(ConsentStatus::Active) => {
            ctx.put_json(
                consent_key(&req.patient_id, &req.doctor_id),
                &Consent { patient_id: req.patient_id, doctor_id: req.doctor_id, status: ConsentStatus::Revoked },
            );
            Ok(())
        }
    }
}
