// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use quebian_core::fixtures::{Member, World};
use quebian_core::identity::{create_presentation, DidKey, Presentation, Role};
use quebian_core::node::NodeConfig;
use quebian_gateway::{router, Gateway};
use serde::Serialize;
use tower::ServiceExt;

pub const HOSPITAL: &str = "H001";

pub struct Fixture {
    pub world: World,
    pub doctors: Vec<Member>,
    pub patients: Vec<Member>,
}

/// One hospital with `doctors` doctors D001.. and `patients` patients P001..,
/// no consents.
pub fn fixture(seed: u64, doctors: usize, patients: usize) -> Fixture {
    let mut world = World::new(&NodeConfig::default(), seed).unwrap();
    world.add_hospital(HOSPITAL).unwrap();
    let doctors = (1..=doctors).map(|i| world.add_doctor(&format!("D{i:03}"), HOSPITAL).unwrap()).collect();
    let patients = (1..=patients).map(|i| world.add_patient(&format!("P{i:03}"), HOSPITAL).unwrap()).collect();
    Fixture { world, doctors, patients }
}

impl Fixture {
    pub fn presentation(&mut self, m: &Member, disclose: &[&str]) -> Presentation {
        let nonce = self.world.fresh_nonce();
        create_presentation(&m.credential, &m.key.secret_key, disclose, nonce).unwrap()
    }

    /// A gateway over a copy of the fixture's ledger.
    pub fn gateway(&mut self, config: &NodeConfig, timeout: Duration) -> Arc<Gateway> {
        let id = DidKey::generate(Role::Verifier, self.world.rng());
        Arc::new(Gateway::new(self.world.node.ledger().snapshot(), config, id, timeout).unwrap())
    }
}

/// Node config whose batches are cut on the first transaction.
pub fn immediate() -> NodeConfig {
    NodeConfig { batch_max: 1, ..NodeConfig::default() }
}

pub struct Client {
    pub app: Router,
}

pub struct Reply {
    pub status: StatusCode,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn error_code(&self) -> String {
        self.json()["code"].as_str().unwrap().to_string()
    }
}

impl Client {
    pub fn new(gw: Arc<Gateway>) -> Self {
        Client { app: router(gw) }
    }

    pub async fn raw(&self, method: Method, uri: &str, body: Option<String>) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        if body.is_some() {
            req = req.header("content-type", "application/json");
        }
        let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        Reply { status, body }
    }

    pub async fn get(&self, uri: &str) -> Reply {
        self.raw(Method::GET, uri, None).await
    }

    pub async fn post<T: Serialize>(&self, uri: &str, body: &T) -> Reply {
        self.raw(Method::POST, uri, Some(serde_json::to_string(body).unwrap())).await
    }
}
