use quebian_core::fixtures::{simple_record, World};
use quebian_core::ledger::{verify_chain, ChainReport, Ledger, LedgerError};
use quebian_core::node::NodeConfig;
use quebian_core::txflow::ValidationCode;

const HOSPITAL: &str = "H001";

fn build(path: &std::path::Path, records: usize) -> (u64, Ledger) {
    let config = NodeConfig { batch_max: 1, ..NodeConfig::default() };
    let mut w = World::with_ledger(Ledger::create(path, 0).unwrap(), &config, 3).unwrap();
    w.add_hospital(HOSPITAL).unwrap();
    let doctor = w.add_doctor("D001", HOSPITAL).unwrap();
    let patient = w.add_patient("P001", HOSPITAL).unwrap();
    w.grant(&patient, &doctor.id).unwrap();
    for i in 0..records {
        let rec = simple_record(&format!("R{i:03}"), &patient.id, &doctor.id, HOSPITAL, "S1");
        assert_eq!(w.append(&doctor, &rec).unwrap().code, ValidationCode::Valid);
    }
    (w.node.ledger().height(), w.node.ledger().snapshot())
}

#[test]
fn reopened_file_matches_the_writer() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ledger");
    let (height, live) = build(&path, 5);
    let reopened = Ledger::open(&path).unwrap();
    assert_eq!(reopened.height(), height);
    assert_eq!(reopened.blocks(), live.blocks());
    assert_eq!(reopened.state(), live.state());
    assert_eq!(reopened.replay_state(), live.state().clone());
    assert_eq!(std::fs::read(&path).unwrap(), live.to_bytes());
    assert_eq!(verify_chain(&path).unwrap(), ChainReport::Ok { height });
}

#[test]
fn appends_continue_after_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ledger");
    let (height, _) = build(&path, 2);
    let config = NodeConfig { batch_max: 1, ..NodeConfig::default() };
    let mut w = World::with_ledger(Ledger::open(&path).unwrap(), &config, 3).unwrap();
    // The world found its issuer setup on the ledger and committed nothing.
    assert_eq!(w.node.ledger().height(), height);
    w.add_hospital("H002").unwrap();
    drop(w);
    assert_eq!(verify_chain(&path).unwrap(), ChainReport::Ok { height: height + 1 });
}

#[test]
fn open_refuses_a_damaged_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ledger");
    let (height, _) = build(&path, 3);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 1);
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(verify_chain(&path).unwrap(), ChainReport::Tampered { height: h, .. } if h == height));
    assert!(matches!(Ledger::open(&path), Err(LedgerError::Corrupt { height: h, .. }) if h == height));
}

#[test]
fn create_refuses_an_existing_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ledger");
    Ledger::create(&path, 0).unwrap();
    assert!(Ledger::create(&path, 0).is_err());
    assert_eq!(Ledger::open_or_create(&path, 0).unwrap().height(), 0);
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(verify_chain(dir.path().join("absent.ledger")).is_err());
}
