use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::crypto::KeyPair;
use crate::txflow::{EndorsedTransaction, ReadWriteSet, Transient, TxProposal};

fn synthetic(id: &str, reads: &[(&str, Option<Version>)], writes: &[(&str, &[u8])]) -> EndorsedTransaction {
    let key = KeyPair::from_seed([9; 32]);
    let proposal = TxProposal::new_signed(id, "noop", vec![], "did:qb:test", &Transient::new(), &key);
    let reads: BTreeMap<String, Option<Version>> = reads.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    let writes: BTreeMap<String, Vec<u8>> = writes.iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect();
    EndorsedTransaction { proposal, rwset: ReadWriteSet::from_maps(reads, writes), endorsements: vec![] }
}

fn push(ledger: &mut Ledger, txs: Vec<EndorsedTransaction>, codes: Vec<ValidationCode>) -> u64 {
    let header = ledger.next_header(&txs, ledger.height() * 10 + 5);
    ledger.append_block(Block { header, txs, validation: codes }).unwrap()
}

/// `blocks` blocks of `per_block` blind writes spread over a few keys.
fn chain(blocks: u64, per_block: usize) -> Ledger {
    let mut l = Ledger::in_memory(0);
    for h in 1..=blocks {
        let txs = (0..per_block)
            .map(|i| {
                let k = format!("k/{}", (h as usize * 7 + i) % 5);
                synthetic(&format!("t{h}-{i}"), &[], &[(&k, format!("v{h}-{i}").as_bytes())])
            })
            .collect();
        push(&mut l, txs, vec![ValidationCode::Valid; per_block]);
    }
    l
}

/// Byte range of the record body for block `height` in the file encoding.
fn record_range(bytes: &[u8], height: usize) -> std::ops::Range<usize> {
    let mut pos = 0;
    for _ in 0..height {
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4 + len;
    }
    let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
    pos + 4..pos + 4 + len
}

fn find(hay: &[u8], needle: &[u8], within: std::ops::Range<usize>) -> usize {
    within.start + hay[within.clone()].windows(needle.len()).position(|w| w == needle).expect("needle present")
}

#[test]
fn genesis_shape() {
    let l = Ledger::in_memory(0);
    assert_eq!(l.height(), 0);
    let g = l.block(0).unwrap();
    assert_eq!(g.header.prev_hash, Hash::ZERO);
    assert_eq!(g.header.tx_root, crate::crypto::sha256(b""));
    assert!(g.txs.is_empty());
    assert_eq!(l.verify(), ChainReport::Ok { height: 0 });
}

#[test]
fn well_linked_block_appends() {
    let mut l = Ledger::in_memory(0);
    assert_eq!(push(&mut l, vec![synthetic("a", &[], &[("k", b"1")])], vec![ValidationCode::Valid]), 1);
}

#[test]
fn linkage_errors_reject_block() {
    let mut l = chain(4, 1);
    let txs = vec![synthetic("x", &[], &[])];
    let bad_prev = BlockHeader { height: 5, prev_hash: Hash::ZERO, tx_root: tx_root(&txs), timestamp: 1 };
    let err = l.append_block(Block { header: bad_prev, txs: txs.clone(), validation: vec![ValidationCode::Valid] });
    assert!(matches!(err, Err(LedgerError::PrevHashMismatch { height: 5 })));
    assert!(err.unwrap_err().is_linkage());

    let mut gap = l.next_header(&txs, 1);
    gap.height = 7;
    let err = l.append_block(Block { header: gap, txs: txs.clone(), validation: vec![ValidationCode::Valid] });
    assert!(matches!(err, Err(LedgerError::HeightGap { expected: 5, got: 7 })));

    let mut root = l.next_header(&txs, 1);
    root.tx_root = Hash::ZERO;
    let err = l.append_block(Block { header: root, txs: txs.clone(), validation: vec![ValidationCode::Valid] });
    assert!(matches!(err, Err(LedgerError::TxRootMismatch { .. })));

    let header = l.next_header(&txs, 1);
    let err = l.append_block(Block { header, txs, validation: vec![] });
    assert!(matches!(err, Err(LedgerError::ValidationLength { .. })));
    assert_eq!(l.height(), 4);
}

#[test]
fn hundred_blocks_verify() {
    let l = chain(100, 1);
    assert_eq!(l.height(), 100);
    assert_eq!(l.verify(), ChainReport::Ok { height: 100 });
}

#[test]
fn read_state_versions_and_history() {
    let mut l = Ledger::in_memory(0);
    assert!(l.read_state("k").is_none());
    assert!(l.read_history("k").is_empty());
    push(&mut l, vec![synthetic("a", &[], &[("k", b"1")])], vec![ValidationCode::Valid]);
    push(&mut l, vec![synthetic("b", &[], &[("other", b"x")])], vec![ValidationCode::Valid]);
    push(&mut l, vec![synthetic("c", &[], &[("j", b"3")])], vec![ValidationCode::Valid]);
    assert_eq!(l.read_state("j").unwrap().version, Version::new(3, 0));
    push(
        &mut l,
        vec![synthetic("d", &[], &[("x", b"")]), synthetic("e", &[], &[("y", b"")]), synthetic("f", &[], &[("k", b"2")])],
        vec![ValidationCode::Valid; 3],
    );
    let h: Vec<_> = l.read_history("k").iter().map(|v| (v.value.clone(), v.version)).collect();
    assert_eq!(h, [(b"1".to_vec(), Version::new(1, 0)), (b"2".to_vec(), Version::new(4, 2))]);
}

#[test]
fn invalid_transactions_leave_state_untouched() {
    let mut l = Ledger::in_memory(0);
    push(&mut l, vec![synthetic("a", &[], &[("k", b"1")])], vec![ValidationCode::Valid]);
    let v1 = Version::new(1, 0);
    let txs = vec![
        synthetic("b", &[("k", Some(v1))], &[("k", b"2")]),
        synthetic("c", &[("k", Some(v1))], &[("k", b"3"), ("z", b"9")]),
        synthetic("d", &[], &[("q", b"x")]),
    ];
    push(&mut l, txs, vec![ValidationCode::Valid, ValidationCode::MvccConflict, ValidationCode::BadSignature]);
    assert_eq!(l.read_state("k").unwrap().value, b"2");
    assert!(l.read_state("z").is_none());
    assert!(l.read_state("q").is_none());
    assert!(l.verify().is_ok());
}

#[test]
fn reopen_replays_identical_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.bin");
    let mut l = Ledger::create(&path, 0).unwrap();
    for h in 1..=5u64 {
        let k = format!("k{}", h % 2);
        push(&mut l, vec![synthetic(&format!("t{h}"), &[], &[(&k, &h.to_be_bytes())])], vec![ValidationCode::Valid]);
    }
    let dump = l.state().canonical_dump();
    let bytes = l.to_bytes();
    drop(l);
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    let reopened = Ledger::open(&path).unwrap();
    assert_eq!(reopened.height(), 5);
    assert_eq!(reopened.state().canonical_dump(), dump);
    assert_eq!(reopened.read_history("k1").len(), 3);
    assert_eq!(verify_chain(&path).unwrap(), ChainReport::Ok { height: 5 });
}

#[test]
fn open_refuses_tampered_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.bin");
    let mut bytes = chain(3, 2).to_bytes();
    let n = bytes.len();
    bytes[n - 10] ^= 1;
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(Ledger::open(&path), Err(LedgerError::Corrupt { .. })));
}

#[test]
fn missing_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(verify_chain(dir.path().join("absent.bin")).is_err());
    assert!(matches!(Ledger::open(dir.path().join("absent.bin")), Err(LedgerError::Io(_))));
}

#[test]
fn tx_payload_flip_reports_its_block() {
    let l = chain(10, 2);
    assert_eq!(l.verify(), ChainReport::Ok { height: 10 });
    let mut bytes = l.to_bytes();
    let range = record_range(&bytes, 4);
    // A character inside the value hex of block 4's first write.
    let at = find(&bytes, b"\"value\":\"", range) + 10;
    bytes[at] = if bytes[at] == b'0' { b'1' } else { b'0' };
    match verify_bytes(&bytes) {
        ChainReport::Tampered { height, .. } => assert_eq!(height, 4),
        ok => panic!("tamper not detected: {ok:?}"),
    }
}

#[test]
fn header_flip_reports_block_four_or_five() {
    let l = chain(10, 2);
    let mut bytes = l.to_bytes();
    let range = record_range(&bytes, 4);
    let at = find(&bytes, b"\"timestamp\":", range) + 12;
    bytes[at] = if bytes[at] == b'4' { b'3' } else { b'4' };
    match verify_bytes(&bytes) {
        ChainReport::Tampered { height, .. } => assert!(height == 4 || height == 5, "height {height}"),
        ok => panic!("tamper not detected: {ok:?}"),
    }
}

#[test]
fn validation_flag_rewrite_detected() {
    let mut l = Ledger::in_memory(0);
    push(&mut l, vec![synthetic("a", &[], &[("k", b"1")])], vec![ValidationCode::Valid]);
    let v1 = Version::new(1, 0);
    push(
        &mut l,
        vec![synthetic("b", &[("k", Some(v1))], &[("k", b"2")]), synthetic("c", &[("k", Some(v1))], &[("k", b"3")])],
        vec![ValidationCode::Valid, ValidationCode::MvccConflict],
    );
    let bytes = l.to_bytes();
    let range = record_range(&bytes, 2);
    let body = std::str::from_utf8(&bytes[range.clone()]).unwrap();
    let swapped = body.replace("[\"VALID\",\"MVCC_CONFLICT\"]", "[\"MVCC_CONFLICT\",\"VALID\"]");
    assert_ne!(swapped, body);
    let mut forged = bytes[..range.start].to_vec();
    forged.extend_from_slice(swapped.as_bytes());
    assert!(matches!(verify_bytes(&forged), ChainReport::Tampered { height: 2, .. }));
}

#[test]
fn truncation_detected() {
    let bytes = chain(3, 1).to_bytes();
    for cut in [1, 3, 5, bytes.len() / 2, bytes.len() - 1] {
        assert!(!verify_bytes(&bytes[..cut]).is_ok(), "cut at {cut}");
    }
    assert!(!verify_bytes(&[]).is_ok());
}

#[test]
fn block_hash_covers_every_header_field() {
    let h = BlockHeader::genesis(0);
    let base = hash_block(&h);
    assert_eq!(base, hash_block(&h.clone()));
    assert_ne!(base, hash_block(&BlockHeader { height: 1, ..h.clone() }));
    assert_ne!(base, hash_block(&BlockHeader { timestamp: 1, ..h.clone() }));
    assert_ne!(base, hash_block(&BlockHeader { tx_root: Hash::ZERO, ..h.clone() }));
    assert_ne!(base, hash_block(&BlockHeader { prev_hash: crate::crypto::sha256(b"x"), ..h }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn any_single_byte_mutation_is_detected(pos in any::<prop::sample::Index>(), xor in 1u8..=255) {
        let mut bytes = chain(6, 3).to_bytes();
        let i = pos.index(bytes.len());
        bytes[i] ^= xor;
        prop_assert!(!verify_bytes(&bytes).is_ok());
    }

    #[test]
    fn replay_equals_incremental(ops in prop::collection::vec((0u8..6, any::<u8>(), any::<bool>()), 1..60)) {
        let mut l = Ledger::in_memory(0);
        let mut snapshots: Vec<BTreeMap<String, Vec<VersionedValue>>> = Vec::new();
        for (n, chunk) in ops.chunks(4).enumerate() {
            let txs: Vec<_> = chunk
                .iter()
                .enumerate()
                .map(|(i, (k, v, _))| synthetic(&format!("t{n}-{i}"), &[], &[(&format!("k{k}"), &[*v])]))
                .collect();
            let codes = chunk
                .iter()
                .map(|(_, _, ok)| if *ok { ValidationCode::Valid } else { ValidationCode::EndorsementPolicyFailure })
                .collect();
            push(&mut l, txs, codes);
            snapshots.push((0..6).map(|k| { let key = format!("k{k}"); (key.clone(), l.read_history(&key).to_vec()) }).collect());
        }
        prop_assert_eq!(l.replay_state(), l.state().clone());
        prop_assert!(l.verify().is_ok());
        // History lists only ever grow by appending.
        for w in snapshots.windows(2) {
            for (k, older) in &w[0] {
                prop_assert!(w[1][k].starts_with(older));
            }
        }
    }
}
