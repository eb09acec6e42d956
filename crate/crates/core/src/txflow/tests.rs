use std::collections::HashMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::oracle::SerialOracle;
use super::*;
use crate::crypto::Hash;
use crate::identity::{chaincode as iam, DidKey, Role};

fn incr(ctx: &mut TxContext<'_>) -> Result<(), ChaincodeError> {
    let key = ctx.arg(0)?.to_string();
    let n: u64 = ctx.get_state(&key).map(|v| String::from_utf8(v).unwrap().parse().unwrap()).unwrap_or(0);
    ctx.put_state(key, (n + 1).to_string().into_bytes());
    Ok(())
}

fn put(ctx: &mut TxContext<'_>) -> Result<(), ChaincodeError> {
    let (k, v) = (ctx.arg(0)?.to_string(), ctx.arg(1)?.as_bytes().to_vec());
    ctx.put_state(k, v);
    Ok(())
}

fn refuse(_: &mut TxContext<'_>) -> Result<(), ChaincodeError> {
    Err(ChaincodeError::not_found("nothing here"))
}

struct Net {
    ledger: Ledger,
    endorsers: Vec<Endorser>,
    policy: EndorsementPolicy,
    registry: ChaincodeRegistry,
    client: DidKey,
    seq: u64,
}

impl Net {
    fn new(k: usize) -> Net {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let endorsers: Vec<_> =
            (0..3).map(|i| Endorser::new(format!("e{}", i + 1), KeyPair::generate(&mut rng))).collect();
        let policy = EndorsementPolicy::new(k, endorsers.iter().map(|e| (e.id.clone(), e.public_key()))).unwrap();
        let mut registry = ChaincodeRegistry::standard();
        registry.register("incr", incr);
        registry.register("put", put);
        registry.register("refuse", refuse);
        let client = DidKey::generate(Role::Holder, &mut rng);
        let mut net = Net { ledger: Ledger::in_memory(0), endorsers, policy, registry, client, seq: 0 };
        let p = net.proposal_as(&net.client.clone(), iam::REGISTER_DID, iam::register_did_args(&net.client));
        let tx = net.endorse_all(&p);
        net.commit(vec![tx]);
        net
    }

    fn proposal_as(&mut self, who: &DidKey, f: &str, args: Vec<String>) -> TxProposal {
        self.seq += 1;
        TxProposal::new_signed(format!("tx{}", self.seq), f, args, who.did.clone(), &Transient::new(), &who.secret_key)
    }

    fn proposal(&mut self, f: &str, args: &[&str]) -> TxProposal {
        let c = self.client.clone();
        self.proposal_as(&c, f, args.iter().map(|s| s.to_string()).collect())
    }

    fn endorse_by(&self, p: &TxProposal, which: &[usize]) -> EndorsedTransaction {
        let mut rwset = None;
        let endorsements = which
            .iter()
            .map(|&i| {
                let (rw, e) = self.endorsers[i].endorse(&self.registry, p, &Transient::new(), self.ledger.state()).unwrap();
                rwset = Some(rw);
                e
            })
            .collect();
        EndorsedTransaction { proposal: p.clone(), rwset: rwset.unwrap(), endorsements }
    }

    fn endorse_all(&self, p: &TxProposal) -> EndorsedTransaction {
        self.endorse_by(p, &[0, 1, 2])
    }

    fn validate(&self, txs: &[EndorsedTransaction]) -> Vec<ValidationCode> {
        validate_block(txs, self.ledger.state(), &self.policy, &self.registry, self.ledger.height() + 1)
    }

    fn commit(&mut self, txs: Vec<EndorsedTransaction>) -> Option<CommitEvent> {
        validate_and_commit(&mut self.ledger, txs, &self.policy, &self.registry, 1).unwrap()
    }
}

#[test]
fn endorsers_agree_on_identical_snapshot() {
    let mut net = Net::new(2);
    let p = net.proposal("incr", &["k"]);
    let tx = net.endorse_all(&p);
    let d = tx.rwset.digest();
    assert!(tx.endorsements.iter().all(|e| e.rwset_digest == d));
    assert!(tx.digests_consistent());
    assert_eq!(tx.rwset.reads, [ReadEntry { key: "k".into(), version: None }]);
    assert_eq!(tx.rwset.writes, [WriteEntry { key: "k".into(), value: b"1".to_vec() }]);
}

#[test]
fn endorsement_does_not_mutate_snapshot() {
    let mut net = Net::new(2);
    let before = net.ledger.state().clone();
    let p = net.proposal("put", &["a", "b"]);
    net.endorse_all(&p);
    assert_eq!(*net.ledger.state(), before);
}

#[test]
fn bad_client_signature_refused() {
    let mut net = Net::new(2);
    let mut p = net.proposal("incr", &["k"]);
    p.args[0] = "other".into();
    let r = net.endorsers[0].endorse(&net.registry, &p, &Transient::new(), net.ledger.state());
    assert_eq!(r.unwrap_err(), EndorseError::BadSignature(net.client.did.clone()));
}

#[test]
fn unregistered_submitter_refused() {
    let mut net = Net::new(2);
    let stranger = DidKey::generate(Role::Holder, &mut ChaCha20Rng::seed_from_u64(99));
    let p = net.proposal_as(&stranger, "incr", vec!["k".into()]);
    let r = net.endorsers[0].endorse(&net.registry, &p, &Transient::new(), net.ledger.state());
    assert!(matches!(r, Err(EndorseError::BadSignature(_))));
}

#[test]
fn unknown_function_refused() {
    let mut net = Net::new(2);
    let p = net.proposal("delete_everything", &[]);
    let r = net.endorsers[0].endorse(&net.registry, &p, &Transient::new(), net.ledger.state());
    assert_eq!(r.unwrap_err(), EndorseError::BadFunction("delete_everything".into()));
}

#[test]
fn chaincode_refusal_propagates() {
    let mut net = Net::new(2);
    let p = net.proposal("refuse", &[]);
    let r = net.endorsers[0].endorse(&net.registry, &p, &Transient::new(), net.ledger.state());
    assert!(matches!(r, Err(EndorseError::Chaincode(ChaincodeError { kind: RejectKind::NotFound, .. }))));
}

#[test]
fn transient_must_match_signed_digest() {
    let mut net = Net::new(2);
    let p = net.proposal("incr", &["k"]);
    let mut t = Transient::new();
    t.insert("presentation".into(), "{}".into());
    let r = net.endorsers[0].endorse(&net.registry, &p, &t, net.ledger.state());
    assert_eq!(r.unwrap_err(), EndorseError::TransientMismatch);
}

#[test]
fn policy_examples() {
    let mut net = Net::new(2);
    let p = net.proposal("incr", &["k"]);
    assert!(check_endorsement_policy(&net.endorse_by(&p, &[0, 1]), &net.policy));
    assert!(!check_endorsement_policy(&net.endorse_by(&p, &[0]), &net.policy));
    assert!(!check_endorsement_policy(&net.endorse_by(&p, &[0, 0]), &net.policy));

    let mut wrong_digest = net.endorse_by(&p, &[0, 1]);
    let forged = Hash::from_bytes([7; 32]);
    wrong_digest.endorsements[1] = Endorsement::sign("e2", forged, &KeyPair::from_seed([1; 32]));
    assert!(!check_endorsement_policy(&wrong_digest, &net.policy));

    let mut bad_sig = net.endorse_by(&p, &[0, 1]);
    bad_sig.endorsements[1].signature = bad_sig.endorsements[0].signature;
    assert!(!check_endorsement_policy(&bad_sig, &net.policy));

    let mut outsider = net.endorse_by(&p, &[0, 1]);
    outsider.endorsements[1].endorser_id = "mallory".into();
    assert!(!check_endorsement_policy(&outsider, &net.policy));
}

#[test]
fn policy_bounds() {
    let keys = || (0..2).map(|i| (format!("e{i}"), KeyPair::from_seed([i as u8; 32]).public()));
    assert!(EndorsementPolicy::new(0, keys()).is_err());
    assert!(EndorsementPolicy::new(3, keys()).is_err());
    assert!(EndorsementPolicy::new(2, keys()).is_ok());
}

#[test]
fn same_key_in_one_block_conflicts() {
    let mut net = Net::new(2);
    let a = net.proposal("incr", &["k"]);
    let b = net.proposal("incr", &["k"]);
    let txs = vec![net.endorse_all(&a), net.endorse_all(&b)];
    assert_eq!(net.validate(&txs), [ValidationCode::Valid, ValidationCode::MvccConflict]);
}

#[test]
fn disjoint_keys_both_valid() {
    let mut net = Net::new(2);
    let a = net.proposal("incr", &["k1"]);
    let b = net.proposal("incr", &["k2"]);
    let txs = vec![net.endorse_all(&a), net.endorse_all(&b)];
    assert_eq!(net.validate(&txs), [ValidationCode::Valid, ValidationCode::Valid]);
}

#[test]
fn policy_failure_precedes_mvcc() {
    let mut net = Net::new(2);
    let a = net.proposal("incr", &["k"]);
    let b = net.proposal("incr", &["k"]);
    let txs = vec![net.endorse_all(&a), net.endorse_by(&b, &[2])];
    assert_eq!(net.validate(&txs), [ValidationCode::Valid, ValidationCode::EndorsementPolicyFailure]);
}

#[test]
fn code_precedence() {
    let mut net = Net::new(2);
    let p = net.proposal("incr", &["k"]);
    // Forged signature and too few endorsements: signature wins.
    let mut forged = net.endorse_by(&p, &[0]);
    forged.proposal.client_signature = crate::crypto::Signature::from_bytes([0; 64]);
    // Unknown function with a valid signature and full endorsements.
    let mut q = net.proposal("put", &["x", "y"]);
    let mut unknown = net.endorse_all(&q);
    q.function = "gone".into();
    q.client_signature = net.client.secret_key.sign(&q.signing_bytes());
    unknown.proposal = q;
    assert_eq!(net.validate(&[forged, unknown]), [ValidationCode::BadSignature, ValidationCode::BadFunction]);
}

#[test]
fn stale_read_across_blocks_conflicts() {
    let mut net = Net::new(2);
    let a = net.proposal("incr", &["k"]);
    let b = net.proposal("incr", &["k"]);
    let (ta, tb) = (net.endorse_all(&a), net.endorse_all(&b));
    net.commit(vec![ta]);
    let ev = net.commit(vec![tb]).unwrap();
    assert_eq!(ev.codes, [ValidationCode::MvccConflict]);
    assert_eq!(net.ledger.read_state("k").unwrap().value, b"1");
}

#[test]
fn commit_applies_only_valid_writes() {
    let mut net = Net::new(2);
    let p0 = net.proposal("put", &["a", "0"]);
    let p1 = net.proposal("incr", &["c"]);
    let p2 = net.proposal("incr", &["c"]);
    let p3 = net.proposal("put", &["b", "2"]);
    let txs = vec![net.endorse_all(&p0), net.endorse_all(&p1), net.endorse_all(&p2), net.endorse_all(&p3)];
    // Order so the block is [VALID, MVCC_CONFLICT, VALID] on (a, c', b) after c.
    let ev = net.commit(vec![txs[1].clone()]).unwrap();
    assert_eq!(ev.codes, [ValidationCode::Valid]);
    let ev = net.commit(vec![txs[0].clone(), txs[2].clone(), txs[3].clone()]).unwrap();
    assert_eq!(ev.codes, [ValidationCode::Valid, ValidationCode::MvccConflict, ValidationCode::Valid]);
    let st = net.ledger.state();
    assert_eq!(st.get("a").unwrap().value, b"0");
    assert_eq!(st.get("b").unwrap().value, b"2");
    assert_eq!(st.get("c").unwrap().value, b"1");
    assert_eq!(st.get("b").unwrap().version, Version::new(3, 2));
}

#[test]
fn empty_batch_commits_nothing() {
    let mut net = Net::new(2);
    let h = net.ledger.height();
    assert!(net.commit(vec![]).is_none());
    assert_eq!(net.ledger.height(), h);
}

#[test]
fn commit_event_line_shape() {
    let ev = CommitEvent {
        height: 3,
        tx_ids: vec!["a".into(), "b".into()],
        codes: vec![ValidationCode::Valid, ValidationCode::MvccConflict],
    };
    assert_eq!(ev.to_json_line(), r#"{"codes":["VALID","MVCC_CONFLICT"],"height":3,"txIds":["a","b"]}"#);
}

#[test]
fn restart_reproduces_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("l.bin");
    let mut net = Net::new(2);
    let mut file = Ledger::create(&path, 0).unwrap();
    for b in &net.ledger.blocks()[1..] {
        file.append_block(b.clone()).unwrap();
    }
    net.ledger = file;
    for i in 0..5 {
        let p = net.proposal("incr", &[&format!("k{}", i % 2)]);
        let tx = net.endorse_all(&p);
        net.commit(vec![tx]);
    }
    let dump = net.ledger.state().canonical_dump();
    drop(net);
    let reopened = Ledger::open(&path).unwrap();
    assert_eq!(reopened.state().canonical_dump(), dump);
    assert_eq!(reopened.read_state("k0").unwrap().value, b"3");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Batches endorsed against one stale snapshot, then validated: the VALID
    /// set and final state equal one-at-a-time re-execution.
    #[test]
    fn pipeline_matches_serial_oracle(
        batches in prop::collection::vec(prop::collection::vec((0u8..4, any::<bool>()), 1..8), 1..8)
    ) {
        let mut net = Net::new(2);
        let start_height = net.ledger.height() + 1;
        let initial = net.ledger.state().clone();
        for batch in batches {
            let txs: Vec<_> = batch
                .iter()
                .map(|(k, blind)| {
                    let key = format!("k{k}");
                    let p = if *blind { net.proposal("put", &[&key, "100"]) } else { net.proposal("incr", &[&key]) };
                    // Endorsers are identical; rwset digests must agree.
                    let tx = net.endorse_all(&p);
                    assert!(tx.digests_consistent());
                    tx
                })
                .collect();
            net.commit(txs);
        }
        let report = SerialOracle::new(&net.registry, initial)
            .check(net.ledger.blocks(), start_height, &HashMap::new(), net.ledger.state());
        prop_assert_eq!(report.mismatches(), 0, "{:?}", report);
    }
}
