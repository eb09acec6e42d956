// SPDX-License-Identifier: Apache-2.0

mod common;

use std::time::Duration;

use axum::http::{Method, StatusCode};
use common::{fixture, immediate, Client, HOSPITAL};
use quebian_core::consensus::EngineKind;
use quebian_core::ehr::{self, HospitalRegistration, PatientRegistration};
use quebian_core::fixtures::{mutate_presentation, simple_record, CRED_DEF_ID};
use quebian_core::identity::{CredentialDefinition, DidKey, Role, Schema};
use quebian_core::node::NodeConfig;
use quebian_gateway::wire::{
    ConsentBody, CredDefRequest, DidRequest, RecordRequest, RevocationRequest, SchemaRequest,
};

const LONG: Duration = Duration::from_secs(5);

#[tokio::test]
async fn record_needs_consent_then_commits() {
    let mut fx = fixture(1, 1, 1);
    let gw = fx.gateway(&immediate(), LONG);
    let c = Client::new(gw.clone());
    let (d, p) = (fx.doctors[0].clone(), fx.patients[0].clone());

    let rec = simple_record("R001", &p.id, &d.id, HOSPITAL, "S01");
    let body = RecordRequest { record: rec.clone(), presentation: fx.presentation(&d, &[]) };
    let r = c.post("/records", &body).await;
    assert_eq!(r.status, StatusCode::FORBIDDEN);
    assert_eq!(r.error_code(), "CONSENT_MISSING");

    let grant = ConsentBody { patient_id: p.id.clone(), doctor_id: d.id.clone(), presentation: fx.presentation(&p, &[]) };
    let r = c.post("/consents/grant", &grant).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&r.body));

    let body = RecordRequest { record: rec, presentation: fx.presentation(&d, &[]) };
    let r = c.post("/records", &body).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let v = r.json();
    assert_eq!(v["code"], "VALID");
    let height = v["height"].as_u64().unwrap();
    assert_eq!(height, gw.read(|l| l.height()));

    // The same presentation cannot authorize a second write.
    let again = RecordRequest { record: simple_record("R002", &p.id, &d.id, HOSPITAL, "S01"), ..body };
    let r = c.post("/records", &again).await;
    assert_eq!(r.status, StatusCode::FORBIDDEN);
    assert_eq!(r.error_code(), "AUTH_FAILED");

    let tx = v["txId"].as_str().unwrap();
    let s = c.get(&format!("/txs/{tx}")).await.json();
    assert_eq!(s["status"], "COMMITTED");
    assert_eq!(s["height"], height);
}

#[tokio::test]
async fn queries_are_the_module_output_byte_for_byte() {
    let mut fx = fixture(2, 1, 2);
    let (d, p1, p2) = (fx.doctors[0].clone(), fx.patients[0].clone(), fx.patients[1].clone());
    fx.world.grant(&p1, &d.id).unwrap();
    fx.world.grant(&p2, &d.id).unwrap();
    for i in 0..6 {
        let p = if i % 2 == 0 { &p1 } else { &p2 };
        let sym = if i % 3 == 0 { "S-A" } else { "S-B" };
        fx.world.append(&d, &simple_record(&format!("R{i:03}"), &p.id, &d.id, HOSPITAL, sym)).unwrap();
    }
    let gw = fx.gateway(&immediate(), LONG);
    let c = Client::new(gw.clone());
    let state = gw.read(|l| l.state().clone());
    for p in [&p1, &p2] {
        let r = c.get(&format!("/records?patientId={}", p.id)).await;
        assert_eq!(r.status, StatusCode::OK);
        assert_eq!(r.body, serde_json::to_vec(&ehr::query_by_patient(&state, &p.id)).unwrap());
    }
    for s in ["S-A", "S-B", "S-none"] {
        let r = c.get(&format!("/records?symptomId={s}")).await;
        assert_eq!(r.body, serde_json::to_vec(&ehr::query_by_symptom(&state, s)).unwrap());
    }
    let all = ehr::query_by_patient(&state, &p1.id);
    let page = c.get(&format!("/records?patientId={}&offset=1&limit=1", p1.id)).await;
    assert_eq!(page.body, serde_json::to_vec(&all[1..2]).unwrap());

    for bad in ["/records", "/records?patientId=P001&symptomId=S-A", "/records?limit=x&patientId=P001"] {
        let r = c.get(bad).await;
        assert_eq!(r.status, StatusCode::BAD_REQUEST, "{bad}");
        assert_eq!(r.error_code(), "BAD_REQUEST");
    }
}

#[tokio::test]
async fn every_error_response_is_one_api_error() {
    let mut fx = fixture(3, 1, 1);
    let c = Client::new(fx.gateway(&immediate(), LONG));
    let cases = [
        c.raw(Method::POST, "/records", Some("{not json".into())).await,
        c.raw(Method::POST, "/hospitals", Some(r#"{"hospitalId":"H9"}"#.into())).await,
        c.raw(Method::POST, "/hospitals", None).await,
        c.get("/nowhere").await,
        c.raw(Method::DELETE, "/records", None).await,
        c.raw(Method::PUT, "/records", Some("{}".into())).await,
        c.get("/ledger/blocks/999").await,
        c.get("/ledger/blocks/abc").await,
        c.get("/txs/tx-unknown").await,
    ];
    let expected = [400, 422, 415, 404, 405, 405, 404, 400, 404];
    for (r, want) in cases.iter().zip(expected) {
        assert_eq!(r.status.as_u16(), want, "{}", String::from_utf8_lossy(&r.body));
        let v = r.json();
        let obj = v.as_object().unwrap();
        assert!(obj.keys().all(|k| ["code", "message", "txId"].contains(&k.as_str())));
        assert!(["AUTH_FAILED", "CONSENT_MISSING", "NOT_FOUND", "CONFLICT", "BAD_REQUEST"]
            .contains(&v["code"].as_str().unwrap()));
    }
}

#[tokio::test]
async fn registrations_and_conflicts() {
    let mut fx = fixture(4, 1, 0);
    let c = Client::new(fx.gateway(&immediate(), LONG));
    let h = HospitalRegistration { hospital_id: "H002".into(), address: "a".into(), phone: "1".into(), departments: vec![] };
    assert_eq!(c.post("/hospitals", &h).await.status, StatusCode::CREATED);
    let r = c.post("/hospitals", &h).await;
    assert_eq!(r.status, StatusCode::CONFLICT);

    let key = DidKey::generate(Role::Holder, fx.world.rng());
    let p = PatientRegistration { patient_id: "P100".into(), did: key.did.clone(), demographics: Default::default(), hospital_id: "H002".into() };
    assert_eq!(c.post("/patients", &p).await.error_code(), "NOT_FOUND");
    assert_eq!(c.post("/iam/dids", &DidRequest::signed(&key)).await.status, StatusCode::CREATED);
    assert_eq!(c.post("/iam/dids", &DidRequest::signed(&key)).await.error_code(), "CONFLICT");
    assert_eq!(c.post("/patients", &p).await.status, StatusCode::CREATED);

    let mut forged = DidRequest::signed(&DidKey::generate(Role::Holder, fx.world.rng()));
    forged.verification_key = key.secret_key.public().to_hex();
    assert_eq!(c.post("/iam/dids", &forged).await.error_code(), "AUTH_FAILED");
}

#[tokio::test]
async fn identity_flow_over_http() {
    let mut fx = fixture(5, 0, 1);
    let gw = fx.gateway(&immediate(), LONG);
    let c = Client::new(gw.clone());
    let issuer = DidKey::generate(Role::Issuer, fx.world.rng());
    assert_eq!(c.post("/iam/dids", &DidRequest::signed(&issuer)).await.status, StatusCode::CREATED);
    let schema = Schema { schema_id: "s2".into(), name: "n".into(), version: "1".into(), attr_names: vec!["a".into()] };
    assert_eq!(c.post("/iam/schemas", &SchemaRequest::signed(&issuer, &schema)).await.status, StatusCode::CREATED);
    let cd = CredentialDefinition { cred_def_id: "cd2".into(), issuer_did: issuer.did.clone(), schema_id: "s2".into() };
    let mut bad = CredDefRequest::signed(&issuer, &cd);
    bad.cred_def.schema_id = "s-other".into();
    assert_eq!(c.post("/iam/creddefs", &bad).await.error_code(), "AUTH_FAILED");
    assert_eq!(c.post("/iam/creddefs", &CredDefRequest::signed(&issuer, &cd)).await.status, StatusCode::CREATED);

    let p = fx.patients[0].clone();
    let nonce_pres = |nonce| {
        quebian_core::identity::create_presentation(&p.credential, &p.key.secret_key, &["name"], nonce).unwrap()
    };
    let n = serde_json::from_value(c.get("/iam/nonce").await.json()["nonce"].clone()).unwrap();
    let pres = nonce_pres(n);
    let r = c.post("/iam/verify", &verify(&pres)).await.json();
    assert_eq!(r["accepted"], true);
    assert_eq!(r["disclosed"]["name"], p.credential.attrs["name"]);
    assert_eq!(c.post("/iam/verify", &verify(&pres)).await.json()["reason"], "nonce-replay");
    let unissued = nonce_pres(fx.world.fresh_nonce());
    assert_eq!(c.post("/iam/verify", &verify(&unissued)).await.json()["reason"], "nonce-mismatch");

    for k in 0..11 {
        let n = serde_json::from_value(c.get("/iam/nonce").await.json()["nonce"].clone()).unwrap();
        let pres = nonce_pres(n);
        let (label, m) = mutate_presentation(&pres, k);
        let r = c.post("/iam/verify", &verify(&m)).await;
        assert_eq!(r.status, StatusCode::OK);
        assert_eq!(r.json()["accepted"], false, "{label}");
    }

    let rv = RevocationRequest::signed(&fx.world.issuer, CRED_DEF_ID, &p.credential.cred_id);
    assert_eq!(c.post("/iam/revocations", &rv).await.status, StatusCode::CREATED);
    let n = serde_json::from_value(c.get("/iam/nonce").await.json()["nonce"].clone()).unwrap();
    let pres = nonce_pres(n);
    assert_eq!(c.post("/iam/verify", &verify(&pres)).await.json()["reason"], "revoked");
}

fn verify(pres: &quebian_core::identity::Presentation) -> serde_json::Value {
    serde_json::json!({ "presentation": pres })
}

#[tokio::test]
async fn ledger_inspection_endpoints() {
    let mut fx = fixture(6, 0, 0);
    let gw = fx.gateway(&immediate(), LONG);
    let c = Client::new(gw.clone());
    let tip = gw.read(|l| l.height());
    let v = c.get("/ledger/verify").await.json();
    assert_eq!(v, serde_json::json!({ "ok": true, "height": tip }));
    let b = c.get(&format!("/ledger/blocks/{tip}")).await.json();
    assert_eq!(b["header"]["height"], tip);
    assert_eq!(b["hash"], serde_json::to_value(gw.read(|l| l.tip_hash())).unwrap());
    let m = c.get("/metrics").await.json();
    assert_eq!(m["engine"], "solo");
    assert_eq!(m["height"], tip);
}

#[tokio::test]
async fn commit_timeout_returns_tx_id_for_polling() {
    let mut fx = fixture(7, 0, 0);
    let config = NodeConfig { batch_max: 10, batch_wait_ms: 200, ..NodeConfig::default() };
    let gw = fx.gateway(&config, Duration::from_millis(30));
    let c = Client::new(gw.clone());
    let h = HospitalRegistration { hospital_id: "H010".into(), address: "a".into(), phone: "1".into(), departments: vec![] };
    let r = c.post("/hospitals", &h).await;
    assert_eq!(r.status, StatusCode::GATEWAY_TIMEOUT);
    let tx = r.json()["txId"].as_str().unwrap().to_string();
    assert_eq!(c.get(&format!("/txs/{tx}")).await.json()["status"], "PENDING");
    assert_eq!(c.get("/metrics").await.json()["pending"], 1);

    tokio::time::sleep(Duration::from_millis(250)).await;
    gw.tick().unwrap();
    let s = c.get(&format!("/txs/{tx}")).await.json();
    assert_eq!(s["status"], "COMMITTED");
    assert_eq!(s["code"], "VALID");
}

#[tokio::test]
async fn ticker_cuts_partial_batches() {
    for orderer in [EngineKind::Solo, EngineKind::Pbft] {
        let mut fx = fixture(8, 0, 0);
        let config = NodeConfig { orderer, batch_max: 10, batch_wait_ms: 20, ..NodeConfig::default() };
        let gw = fx.gateway(&config, LONG);
        let _ticker = gw.spawn_ticker();
        let c = Client::new(gw.clone());
        let h = HospitalRegistration { hospital_id: "H011".into(), address: "a".into(), phone: "1".into(), departments: vec![] };
        let r = c.post("/hospitals", &h).await;
        assert_eq!(r.status, StatusCode::CREATED, "{orderer:?}");
        assert_eq!(c.get("/metrics").await.json()["engine"], match orderer {
            EngineKind::Solo => "solo",
            EngineKind::Pbft => "pbft",
        });
    }
}

#[tokio::test]
async fn concurrent_writes_share_batches() {
    let mut fx = fixture(9, 0, 0);
    let config = NodeConfig { batch_max: 8, batch_wait_ms: 30, ..NodeConfig::default() };
    let gw = fx.gateway(&config, LONG);
    let _ticker = gw.spawn_ticker();
    let c = std::sync::Arc::new(Client::new(gw.clone()));
    let start = gw.read(|l| l.height());
    let tasks: Vec<_> = (0..8)
        .map(|i| {
            let c = c.clone();
            tokio::spawn(async move {
                let h = HospitalRegistration { hospital_id: format!("H2{i:02}"), address: "a".into(), phone: "1".into(), departments: vec![] };
                c.post("/hospitals", &h).await.status
            })
        })
        .collect();
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::CREATED);
    }
    let blocks = gw.read(|l| l.height()) - start;
    assert!(blocks < 8, "{blocks} blocks for 8 txs");
}
