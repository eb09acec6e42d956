// SPDX-License-Identifier: Apache-2.0

//! The node behind the gateway. Writes are signed with the gateway's own
//! DID; the principal authenticates through the presentation carried in the
//! call's transient data or through its own signature in the arguments.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard, Weak};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use quebian_core::identity::{self, DidKey, Nonce, Presentation, RejectReason, Role, Verifier};
use quebian_core::ledger::{Ledger, LedgerError};
use quebian_core::node::{Node, NodeConfig, NodeError, TxOutcome};
use quebian_core::txflow::{TxProposal, ValidationCode};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use tokio::sync::{oneshot, Notify};
use tokio::task::JoinHandle;

use crate::config::GatewayConfig;
use crate::error::{ApiError, ErrorCode};
use crate::wire::{Call, TxState, TxStatus};

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error("identity file {path}: {message}")]
    Identity { path: String, message: String },
}

pub fn wall_clock_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Reads a wallet key file, or creates one with a fresh verifier DID.
pub fn load_or_create_identity(path: &Path) -> Result<DidKey, StartError> {
    let err = |message: String| StartError::Identity { path: path.display().to_string(), message };
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        return serde_json::from_str(&text).map_err(|e| err(e.to_string()));
    }
    let key = DidKey::generate(Role::Verifier, &mut rand::rngs::OsRng);
    let text = serde_json::to_string_pretty(&key).expect("DidKey serializes");
    std::fs::write(path, text).map_err(|e| err(e.to_string()))?;
    Ok(key)
}

/// Registers `key` on-ledger unless it already is.
pub fn ensure_registered(node: &mut Node, key: &DidKey, rng: &mut impl Rng) -> Result<(), NodeError> {
    if node.ledger().state().get(&identity::did_key(&key.did)).is_some() {
        return Ok(());
    }
    let args = identity::register_did_args(key);
    let empty = Default::default();
    let proposal =
        TxProposal::new_signed(fresh_tx_id(rng), identity::REGISTER_DID, args, key.did.clone(), &empty, &key.secret_key);
    let out = node.execute(proposal, &empty, wall_clock_ms())?;
    if out.code != ValidationCode::Valid {
        return Err(NodeError::NotCommitted(format!("{} ({})", out.tx_id, out.code)));
    }
    Ok(())
}

pub fn fresh_tx_id(rng: &mut impl Rng) -> String {
    format!("tx-{:032x}", rng.gen::<u128>())
}

pub fn sign_call(call: &Call, tx_id: String, signer: &DidKey) -> TxProposal {
    TxProposal::new_signed(tx_id, call.function, call.args.clone(), signer.did.clone(), &call.transient, &signer.secret_key)
}

/// Maps a commit outcome to the API result: anything but VALID is a conflict.
pub fn committed(out: TxOutcome) -> Result<TxOutcome, ApiError> {
    if out.code == ValidationCode::Valid {
        Ok(out)
    } else {
        let msg = format!("transaction committed as {}", out.code);
        Err(ApiError::new(ErrorCode::Conflict, msg).with_tx(out.tx_id))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GatewayMetrics {
    pub engine: String,
    pub height: u64,
    pub submitted: u64,
    /// Refused at endorsement; never ordered.
    pub rejected: u64,
    pub pending: u64,
    pub timeouts: u64,
    /// Committed transactions by validation code.
    pub codes: BTreeMap<String, u64>,
}

struct Inner {
    node: Node,
    waiters: HashMap<String, oneshot::Sender<TxOutcome>>,
    pending: HashSet<String>,
    verifier: Verifier,
    rng: StdRng,
    metrics: GatewayMetrics,
}

impl Inner {
    fn dispatch(&mut self) {
        for ev in self.node.take_events() {
            for (tx_id, code) in ev.tx_ids.into_iter().zip(ev.codes) {
                *self.metrics.codes.entry(code.as_str().to_string()).or_default() += 1;
                self.pending.remove(&tx_id);
                if let Some(w) = self.waiters.remove(&tx_id) {
                    let _ = w.send(TxOutcome { tx_id, height: ev.height, code });
                }
            }
        }
    }
}

pub struct Gateway {
    inner: Mutex<Inner>,
    identity: DidKey,
    commit_timeout: Duration,
    wake: Arc<Notify>,
}

impl Gateway {
    pub fn new(ledger: Ledger, config: &NodeConfig, identity: DidKey, commit_timeout: Duration) -> Result<Self, StartError> {
        let mut node = Node::new(ledger, config)?;
        let mut rng = StdRng::from_entropy();
        ensure_registered(&mut node, &identity, &mut rng)?;
        node.take_events();
        let metrics = GatewayMetrics { engine: node.engine_id().to_string(), ..Default::default() };
        Ok(Gateway {
            inner: Mutex::new(Inner {
                node,
                waiters: HashMap::new(),
                pending: HashSet::new(),
                verifier: Verifier::new(),
                rng,
                metrics,
            }),
            identity,
            commit_timeout,
            wake: Arc::new(Notify::new()),
        })
    }

    /// Opens the configured ledger file and identity, creating either if
    /// missing.
    pub fn open(config: &GatewayConfig) -> Result<Self, StartError> {
        let ledger = Ledger::open_or_create(&config.ledger_path, 0)?;
        let identity = load_or_create_identity(&config.identity_path)?;
        Self::new(ledger, &config.node, identity, Duration::from_millis(config.commit_timeout_ms))
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn identity(&self) -> &DidKey {
        &self.identity
    }

    /// Runs `f` against the committed ledger.
    pub fn read<R>(&self, f: impl FnOnce(&Ledger) -> R) -> R {
        f(self.lock().node.ledger())
    }

    /// Endorses and submits `call`, then waits for its block. A timeout
    /// leaves the transaction in flight; poll [`Gateway::tx_status`].
    pub async fn submit(&self, call: Call) -> Result<TxOutcome, ApiError> {
        let (tx_id, rx) = {
            let mut g = self.lock();
            let tx_id = fresh_tx_id(&mut g.rng);
            let proposal = sign_call(&call, tx_id.clone(), &self.identity);
            let tx = match g.node.endorse(proposal, &call.transient) {
                Ok(tx) => tx,
                Err(e) => {
                    g.metrics.rejected += 1;
                    return Err(e.into());
                }
            };
            let (send, recv) = oneshot::channel();
            g.waiters.insert(tx_id.clone(), send);
            g.pending.insert(tx_id.clone());
            if let Err(e) = g.node.submit(tx, wall_clock_ms()) {
                g.waiters.remove(&tx_id);
                g.pending.remove(&tx_id);
                return Err(ApiError::from(e).with_tx(tx_id));
            }
            g.metrics.submitted += 1;
            g.dispatch();
            (tx_id, recv)
        };
        self.wake.notify_one();
        match tokio::time::timeout(self.commit_timeout, rx).await {
            Ok(Ok(out)) => committed(out),
            Ok(Err(_)) => Err(ApiError::internal("commit notification lost").with_tx(tx_id)),
            Err(_) => {
                let mut g = self.lock();
                g.waiters.remove(&tx_id);
                g.metrics.timeouts += 1;
                let msg = format!("not committed within {} ms", self.commit_timeout.as_millis());
                Err(ApiError::new(ErrorCode::Timeout, msg).with_tx(tx_id))
            }
        }
    }

    /// Advances the ordering engine to the current time.
    pub fn tick(&self) -> Result<(), ApiError> {
        let mut g = self.lock();
        let r = g.node.tick(wall_clock_ms());
        g.dispatch();
        r.map_err(ApiError::from)
    }

    pub fn next_deadline(&self) -> Option<u64> {
        self.lock().node.next_deadline()
    }

    /// Ticks the engine whenever a batch deadline passes. Stops once the
    /// gateway is dropped.
    pub fn spawn_ticker(self: &Arc<Self>) -> JoinHandle<()> {
        let weak: Weak<Self> = Arc::downgrade(self);
        let wake = self.wake.clone();
        tokio::spawn(async move {
            loop {
                let deadline = match weak.upgrade() {
                    Some(gw) => gw.next_deadline(),
                    None => return,
                };
                match deadline {
                    Some(d) => {
                        let wait = Duration::from_millis(d.saturating_sub(wall_clock_ms()));
                        tokio::select! {
                            _ = tokio::time::sleep(wait) => {}
                            _ = wake.notified() => continue,
                        }
                    }
                    None => {
                        wake.notified().await;
                        continue;
                    }
                }
                match weak.upgrade() {
                    Some(gw) => {
                        let _ = gw.tick();
                    }
                    None => return,
                }
            }
        })
    }

    pub fn tx_status(&self, tx_id: &str) -> Option<TxStatus> {
        let g = self.lock();
        if g.pending.contains(tx_id) {
            return Some(TxStatus { tx_id: tx_id.into(), status: TxState::Pending, height: None, code: None });
        }
        g.node.outcome_of(tx_id).map(|o| TxStatus {
            tx_id: o.tx_id,
            status: TxState::Committed,
            height: Some(o.height),
            code: Some(o.code),
        })
    }

    /// A fresh verifier nonce; each is accepted by [`Gateway::verify`] once.
    pub fn challenge(&self) -> Nonce {
        let mut g = self.lock();
        let Inner { verifier, rng, .. } = &mut *g;
        verifier.challenge(rng)
    }

    pub fn verify(&self, pres: &Presentation) -> Result<(), RejectReason> {
        let mut g = self.lock();
        let Inner { verifier, node, .. } = &mut *g;
        verifier.verify(pres, node.ledger().state())
    }

    pub fn metrics(&self) -> GatewayMetrics {
        let g = self.lock();
        GatewayMetrics { height: g.node.ledger().height(), pending: g.pending.len() as u64, ..g.metrics.clone() }
    }
}
