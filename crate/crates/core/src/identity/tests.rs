use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::fixtures::{mutate_presentation, Member, World, CRED_DEF_ID};
use crate::node::{NodeConfig, NodeError};
use crate::txflow::{ChaincodeError, EndorseError, RejectKind, Transient, ValidationCode};

fn world() -> World {
    World::new(&NodeConfig::default(), 11).unwrap()
}

fn reject_kind<T: std::fmt::Debug>(r: Result<T, NodeError>) -> RejectKind {
    match r {
        Err(NodeError::Endorse(EndorseError::Chaincode(ChaincodeError { kind, .. }))) => kind,
        other => panic!("expected chaincode rejection, got {other:?}"),
    }
}

fn holder(w: &mut World) -> Member {
    w.new_member("h1", Role::Holder).unwrap()
}

fn license_schema() -> Schema {
    Schema {
        schema_id: "md-license-1".into(),
        name: "MD-License".into(),
        version: "1.0".into(),
        attr_names: vec!["name".into(), "licenseNo".into(), "hospitalId".into()],
    }
}

#[test]
fn did_round_trip_and_uniqueness() {
    let mut w = world();
    let key = DidKey::generate(Role::Issuer, w.rng());
    assert!(key.did.starts_with("did:qb:"));
    w.register_did(&key).unwrap();
    let rec: DidRecord = (&*w.node.ledger().state()).read_json(&did_key(&key.did)).unwrap();
    assert_eq!(rec, key.record());
    assert_eq!(reject_kind(w.register_did(&key)), RejectKind::Conflict);
}

#[test]
fn did_proof_must_match_registered_key() {
    let mut w = world();
    let key = DidKey::generate(Role::Holder, w.rng());
    let mut args = register_did_args(&key);
    let other = DidKey::generate(Role::Holder, w.rng());
    args[1] = other.secret_key.public().to_hex();
    // Signed by `key` but claiming `other`'s public key: the client signature
    // check runs against args[1] and fails.
    let r = w.invoke(&key, REGISTER_DID, args, &Transient::new());
    assert!(matches!(r, Err(NodeError::Endorse(EndorseError::BadSignature(_)))));
}

#[test]
fn did_must_use_method_prefix() {
    let mut w = world();
    let mut key = DidKey::generate(Role::Holder, w.rng());
    key.did = "did:other:1".into();
    assert_eq!(reject_kind(w.register_did(&key)), RejectKind::BadRequest);
}

#[test]
fn publish_requires_issuer_role() {
    let mut w = world();
    let h = holder(&mut w);
    let r = w.invoke(&h.key, PUBLISH_SCHEMA, publish_schema_args(&h.key, &license_schema()), &Transient::new());
    assert_eq!(reject_kind(r), RejectKind::Auth);
}

#[test]
fn schema_and_cred_defs() {
    let mut w = world();
    let issuer = w.issuer.clone();
    let s = license_schema();
    let out = w.invoke(&issuer, PUBLISH_SCHEMA, publish_schema_args(&issuer, &s), &Transient::new()).unwrap();
    assert_eq!(out.code, ValidationCode::Valid);
    let dup = w.invoke(&issuer, PUBLISH_SCHEMA, publish_schema_args(&issuer, &s), &Transient::new());
    assert_eq!(reject_kind(dup), RejectKind::Conflict);

    let cd = |id: &str, schema: &str| CredentialDefinition {
        cred_def_id: id.into(),
        issuer_did: issuer.did.clone(),
        schema_id: schema.into(),
    };
    let missing = w.invoke(&issuer, PUBLISH_CRED_DEF, publish_cred_def_args(&issuer, &cd("cd-x", "nope")), &Transient::new());
    assert_eq!(reject_kind(missing), RejectKind::NotFound);
    for id in ["cd-a", "cd-b"] {
        let out = w
            .invoke(&issuer, PUBLISH_CRED_DEF, publish_cred_def_args(&issuer, &cd(id, "md-license-1")), &Transient::new())
            .unwrap();
        assert_eq!(out.code, ValidationCode::Valid);
    }
    assert!(w.node.ledger().read_state(&cred_def_key("cd-b")).is_some());
}

#[test]
fn schema_validation() {
    let mut s = license_schema();
    assert!(s.validate().is_ok());
    s.attr_names.push("name".into());
    assert!(s.validate().is_err());
    s.attr_names.clear();
    assert!(s.validate().is_err());
}

#[test]
fn issued_digests_verify_and_salts_are_fresh() {
    let mut w = world();
    let h = holder(&mut w);
    for (name, value) in &h.credential.attrs {
        let salt = h.credential.salts[name];
        assert_eq!(h.credential.digests()[name], attr_digest(name, &salt, value));
    }
    let again = issue_credential(
        &w.issuer.secret_key.clone(),
        w.node.ledger().state(),
        CRED_DEF_ID,
        &h.key.did,
        h.credential.attrs.clone(),
        &mut rand::rngs::OsRng,
    )
    .unwrap();
    assert_ne!(again.salts, h.credential.salts);
    assert_ne!(again.digests(), h.credential.digests());
}

#[test]
fn issuance_errors() {
    let mut w = world();
    let h = holder(&mut w);
    let issuer = w.issuer.secret_key.clone();
    let st = w.node.ledger().state();
    let mut attrs = h.credential.attrs.clone();
    attrs.remove("licenseNo");
    let e = issue_credential(&issuer, st, CRED_DEF_ID, &h.key.did, attrs, &mut rand::rngs::OsRng).unwrap_err();
    assert!(matches!(e, IssueError::AttrMismatch { .. }));
    let e = issue_credential(&issuer, st, "nope", &h.key.did, h.credential.attrs.clone(), &mut rand::rngs::OsRng);
    assert_eq!(e.unwrap_err(), IssueError::UnknownCredDef("nope".into()));
    let e = issue_credential(&h.key.secret_key, st, CRED_DEF_ID, &h.key.did, h.credential.attrs.clone(), &mut rand::rngs::OsRng);
    assert!(matches!(e, Err(IssueError::WrongIssuerKey(_))));
}

#[test]
fn issuance_writes_nothing() {
    let mut w = world();
    let h = holder(&mut w);
    let before = w.node.ledger().to_bytes();
    w.issue(&h.key);
    assert_eq!(w.node.ledger().to_bytes(), before);
}

#[test]
fn selective_disclosure() {
    let mut w = world();
    let h = holder(&mut w);
    let nonce = w.fresh_nonce();
    let p = create_presentation(&h.credential, &h.key.secret_key, &["licenseNo"], nonce).unwrap();
    assert_eq!(p.disclosed.keys().collect::<Vec<_>>(), ["licenseNo"]);
    assert_eq!(p.digests.len(), 3);
    let json = serde_json::to_string(&p).unwrap();
    assert!(json.contains(&h.credential.attrs["licenseNo"]));
    assert!(!json.contains(&h.credential.attrs["name"]));
    assert!(!json.contains(&h.credential.attrs["dob"]));
    assert_eq!(verify_presentation(&p, &mut w.node.ledger().state(), Some(nonce)), Ok(()));

    let all = create_presentation(&h.credential, &h.key.secret_key, &["dob", "licenseNo", "name"], nonce).unwrap();
    for (name, d) in &all.disclosed {
        assert_eq!(all.digests[name], attr_digest(name, &d.salt, &d.value));
    }
    assert_eq!(verify_presentation(&all, &mut w.node.ledger().state(), None), Ok(()));

    let none = create_presentation(&h.credential, &h.key.secret_key, &[], nonce).unwrap();
    assert!(none.disclosed.is_empty());
    assert_eq!(verify_presentation(&none, &mut w.node.ledger().state(), None), Ok(()));

    let e = create_presentation(&h.credential, &h.key.secret_key, &["ssn"], nonce).unwrap_err();
    assert_eq!(e, PresentError::UnknownAttr("ssn".into()));
}

#[test]
fn verification_failure_reasons() {
    let mut w = world();
    let h = holder(&mut w);
    let nonce = w.fresh_nonce();
    let p = create_presentation(&h.credential, &h.key.secret_key, &["name"], nonce).unwrap();
    let st = w.node.ledger().state();
    let check = |p: &Presentation| verify_presentation(p, &mut &*st, None);

    let mut flipped = p.clone();
    let v = &mut flipped.disclosed.get_mut("name").unwrap().value;
    *v = format!("{}!", &v[..v.len() - 1]);
    assert_eq!(check(&flipped), Err(RejectReason::DigestMismatch));

    let mut other_def = p.clone();
    other_def.cred_def_id = "unknown".into();
    assert_eq!(check(&other_def), Err(RejectReason::UnknownCredDef));

    let mut foreign = p.clone();
    foreign.holder_signature = w.issuer.secret_key.sign(b"x");
    assert_eq!(check(&foreign), Err(RejectReason::BadHolderSignature));

    assert_eq!(verify_presentation(&p, &mut &*st, Some(Nonce([0; 16]))), Err(RejectReason::NonceMismatch));
}

#[test]
fn revocation() {
    let mut w = world();
    let h = holder(&mut w);
    let nonce = w.fresh_nonce();
    let p = create_presentation(&h.credential, &h.key.secret_key, &[], nonce).unwrap();
    let issuer = w.issuer.clone();
    let args = revoke_credential_args(&issuer, CRED_DEF_ID, &h.credential.cred_id);

    let intruder = w.new_member("x", Role::Issuer).unwrap();
    let r = w.invoke(
        &intruder.key,
        REVOKE_CREDENTIAL,
        revoke_credential_args(&intruder.key, CRED_DEF_ID, &h.credential.cred_id),
        &Transient::new(),
    );
    assert_eq!(reject_kind(r), RejectKind::Auth);
    assert_eq!(verify_presentation(&p, &mut w.node.ledger().state(), None), Ok(()));

    assert_eq!(w.invoke(&issuer, REVOKE_CREDENTIAL, args.clone(), &Transient::new()).unwrap().code, ValidationCode::Valid);
    assert_eq!(verify_presentation(&p, &mut w.node.ledger().state(), None), Err(RejectReason::Revoked));
    // Second revoke commits but writes nothing.
    assert_eq!(w.invoke(&issuer, REVOKE_CREDENTIAL, args, &Transient::new()).unwrap().code, ValidationCode::Valid);
    let hist = w.node.ledger().read_history(&revocation_key(CRED_DEF_ID));
    assert_eq!(hist.len(), 1);
}

#[test]
fn verifier_session_nonces() {
    let mut w = world();
    let h = holder(&mut w);
    let mut v = Verifier::new();
    let n = v.challenge(w.rng());
    let p = create_presentation(&h.credential, &h.key.secret_key, &["name"], n).unwrap();
    let st = w.node.ledger().state();
    assert_eq!(v.verify(&p, st), Ok(()));
    assert_eq!(v.verify(&p, st), Err(RejectReason::NonceReplay));
    let unsolicited = create_presentation(&h.credential, &h.key.secret_key, &["name"], Nonce([5; 16])).unwrap();
    assert_eq!(v.verify(&unsolicited, st), Err(RejectReason::NonceMismatch));
}

#[test]
fn wallet_files_round_trip() {
    let mut w = world();
    let h = holder(&mut w);
    let json = serde_json::to_string(&h.credential).unwrap();
    assert_eq!(serde_json::from_str::<Credential>(&json).unwrap(), h.credential);
    let key_json = serde_json::to_string(&h.key).unwrap();
    let back: DidKey = serde_json::from_str(&key_json).unwrap();
    assert_eq!(back.record(), h.key.record());
}

#[test]
fn issuance_records_identical_in_shape_across_holders() {
    // Two holders: each contributes exactly one DID record, nothing else.
    let mut w = world();
    let before = w.node.ledger().state().keys().map(String::from).collect::<Vec<_>>();
    let a = holder(&mut w);
    let b = w.new_member("h2", Role::Holder).unwrap();
    let after: Vec<_> = w.node.ledger().state().keys().filter(|k| !before.contains(&k.to_string())).collect();
    let mut expected = vec![did_key(&a.key.did), did_key(&b.key.did)];
    expected.sort();
    assert_eq!(after, expected);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn every_single_field_mutation_rejected(k in 0usize..400, disclose in prop::sample::subsequence(vec!["dob", "licenseNo", "name"], 1..=3)) {
        let mut w = world();
        let h = holder(&mut w);
        let nonce = w.fresh_nonce();
        let p = create_presentation(&h.credential, &h.key.secret_key, &disclose, nonce).unwrap();
        let st = w.node.ledger().state();
        prop_assert_eq!(verify_presentation(&p, &mut &*st, None), Ok(()));
        let (label, m) = mutate_presentation(&p, k);
        prop_assert_ne!(&m, &p);
        prop_assert!(verify_presentation(&m, &mut &*st, Some(nonce)).is_err(), "mutation {} accepted", label);
    }
}

#[test]
fn salts_and_nonces_hex_round_trip() {
    let s = Salt([0xab; 16]);
    assert_eq!(Salt::from_hex(&s.to_hex()), Some(s));
    assert_eq!(Nonce::from_hex("zz"), None);
    let m: BTreeMap<String, Salt> = [("a".to_string(), s)].into();
    let j = serde_json::to_string(&m).unwrap();
    assert_eq!(j, format!("{{\"a\":\"{}\"}}", "ab".repeat(16)));
}
