// SPDX-License-Identifier: Apache-2.0

//! Append-only hash-chained block store with a versioned world state.
//!
//! The ledger file is a sequence of records, each a 4-byte big-endian length
//! followed by the canonical JSON of `{hash, header, txs, validation}`. The
//! world state is never persisted; it is rebuilt by replaying the VALID
//! transactions of every block on open.

mod block;
mod state;

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use block::{hash_block, tx_root, Block, BlockHeader};
pub use state::{Version, VersionedValue, WorldState};

use crate::codec::{canonical_bytes, is_canonical};
use crate::crypto::{sha256, sha256_concat, Hash};
use crate::txflow::ValidationCode;
use block::{BlockRecord, RawRecord};

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("expected block height {expected}, got {got}")]
    HeightGap { expected: u64, got: u64 },
    #[error("prevHash mismatch at height {height}")]
    PrevHashMismatch { height: u64 },
    #[error("txRoot mismatch at height {height}")]
    TxRootMismatch { height: u64 },
    #[error("block at height {height} has {txs} txs but {codes} validation codes")]
    ValidationLength { height: u64, txs: usize, codes: usize },
    #[error("ledger file fails verification at height {height}: {reason}")]
    Corrupt { height: u64, reason: String },
    #[error("ledger i/o: {0}")]
    Io(#[from] io::Error),
}

impl LedgerError {
    pub fn is_linkage(&self) -> bool {
        matches!(self, LedgerError::HeightGap { .. } | LedgerError::PrevHashMismatch { .. })
    }
}

/// Outcome of walking a serialized chain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ChainReport {
    Ok { height: u64 },
    Tampered { height: u64, reason: String },
}

impl ChainReport {
    pub fn is_ok(&self) -> bool {
        matches!(self, ChainReport::Ok { .. })
    }
}

#[derive(Debug)]
pub struct Ledger {
    blocks: Vec<Block>,
    hashes: Vec<Hash>,
    state: WorldState,
    file: Option<(PathBuf, File)>,
}

impl Ledger {
    /// A ledger held only in memory, starting from a genesis block.
    pub fn in_memory(genesis_timestamp: u64) -> Self {
        let genesis = Block::genesis(genesis_timestamp);
        Ledger {
            hashes: vec![genesis.hash()],
            blocks: vec![genesis],
            state: WorldState::new(),
            file: None,
        }
    }

    /// Creates a new ledger file containing only the genesis block. Fails if
    /// the file already exists.
    pub fn create(path: impl AsRef<Path>, genesis_timestamp: u64) -> Result<Self, LedgerError> {
        let path = path.as_ref();
        let mut file = OpenOptions::new().create_new(true).append(true).open(path)?;
        let genesis = Block::genesis(genesis_timestamp);
        write_record(&mut file, &genesis)?;
        Ok(Ledger {
            hashes: vec![genesis.hash()],
            blocks: vec![genesis],
            state: WorldState::new(),
            file: Some((path.to_path_buf(), file)),
        })
    }

    /// Opens an existing ledger file, verifying it and replaying state.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LedgerError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        let mut reader = ChainReader::default();
        if let ChainReport::Tampered { height, reason } = reader.read_all(&bytes) {
            return Err(LedgerError::Corrupt { height, reason });
        }
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Ledger {
            blocks: reader.blocks,
            hashes: reader.hashes,
            state: reader.state,
            file: Some((path.to_path_buf(), file)),
        })
    }

    /// Opens `path` if it exists, otherwise creates it.
    pub fn open_or_create(path: impl AsRef<Path>, genesis_timestamp: u64) -> Result<Self, LedgerError> {
        if path.as_ref().exists() {
            Self::open(path)
        } else {
            Self::create(path, genesis_timestamp)
        }
    }

    /// An in-memory copy of this ledger, detached from any file.
    pub fn snapshot(&self) -> Ledger {
        Ledger { blocks: self.blocks.clone(), hashes: self.hashes.clone(), state: self.state.clone(), file: None }
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    /// Height of the tip block; genesis is height 0.
    pub fn height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    pub fn tip_hash(&self) -> Hash {
        *self.hashes.last().expect("ledger always holds genesis")
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        self.blocks.get(usize::try_from(height).ok()?)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn read_state(&self, key: &str) -> Option<&VersionedValue> {
        self.state.get(key)
    }

    pub fn read_history(&self, key: &str) -> &[VersionedValue] {
        self.state.history(key)
    }

    /// Header for the block that would extend the current tip.
    pub fn next_header(&self, txs: &[crate::txflow::EndorsedTransaction], timestamp: u64) -> BlockHeader {
        BlockHeader {
            height: self.height() + 1,
            prev_hash: self.tip_hash(),
            tx_root: tx_root(txs),
            timestamp,
        }
    }

    /// Appends a block whose validation codes have already been assigned.
    /// Persists first, then applies the writes of VALID transactions.
    pub fn append_block(&mut self, block: Block) -> Result<u64, LedgerError> {
        let expected = self.height() + 1;
        let height = block.header.height;
        if height != expected {
            return Err(LedgerError::HeightGap { expected, got: height });
        }
        if block.header.prev_hash != self.tip_hash() {
            return Err(LedgerError::PrevHashMismatch { height });
        }
        if block.txs.len() != block.validation.len() {
            return Err(LedgerError::ValidationLength {
                height,
                txs: block.txs.len(),
                codes: block.validation.len(),
            });
        }
        if tx_root(&block.txs) != block.header.tx_root {
            return Err(LedgerError::TxRootMismatch { height });
        }
        if let Some((_, file)) = self.file.as_mut() {
            write_record(file, &block)?;
        }
        apply_block(&mut self.state, &block);
        self.hashes.push(block.hash());
        self.blocks.push(block);
        Ok(height)
    }

    /// The ledger in its file format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for b in &self.blocks {
            encode_record(&mut out, b);
        }
        out
    }

    /// Verifies the in-memory chain through the same path as [`verify_chain`].
    pub fn verify(&self) -> ChainReport {
        verify_bytes(&self.to_bytes())
    }

    /// Rebuilds the world state from genesis.
    pub fn replay_state(&self) -> WorldState {
        let mut state = WorldState::new();
        for b in &self.blocks {
            apply_block(&mut state, b);
        }
        state
    }
}

fn apply_block(state: &mut WorldState, block: &Block) {
    for (i, (tx, code)) in block.txs.iter().zip(&block.validation).enumerate() {
        if *code == ValidationCode::Valid {
            state.apply_writes(&tx.rwset.writes, Version::new(block.header.height, i as u32));
        }
    }
}

fn encode_record(out: &mut Vec<u8>, block: &Block) {
    let body = canonical_bytes(&BlockRecord::from_block(block));
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
}

fn write_record(file: &mut File, block: &Block) -> io::Result<()> {
    let mut buf = Vec::new();
    encode_record(&mut buf, block);
    file.write_all(&buf)?;
    file.flush()?;
    file.sync_data()
}

/// Verifies a ledger file: record framing, canonical encoding, header
/// hashes, hash linkage, txRoots, and that VALID / MVCC_CONFLICT flags agree
/// with a replay of the read sets. I/O failures are reported separately from
/// verification failures.
pub fn verify_chain(path: impl AsRef<Path>) -> io::Result<ChainReport> {
    let bytes = std::fs::read(path)?;
    Ok(verify_bytes(&bytes))
}

pub fn verify_bytes(bytes: &[u8]) -> ChainReport {
    ChainReader::default().read_all(bytes)
}

#[derive(Default)]
struct ChainReader {
    blocks: Vec<Block>,
    hashes: Vec<Hash>,
    state: WorldState,
}

impl ChainReader {
    fn read_all(&mut self, bytes: &[u8]) -> ChainReport {
        let mut pos = 0usize;
        loop {
            let height = self.blocks.len() as u64;
            if pos == bytes.len() {
                if self.blocks.is_empty() {
                    return ChainReport::Tampered { height: 0, reason: "missing genesis block".into() };
                }
                return ChainReport::Ok { height: height - 1 };
            }
            let tampered = |reason: String| ChainReport::Tampered { height, reason };
            let Some(len_bytes) = bytes.get(pos..pos + 4) else {
                return tampered("truncated length prefix".into());
            };
            let len = u32::from_be_bytes(len_bytes.try_into().expect("4 bytes")) as usize;
            let Some(body) = bytes.get(pos + 4..pos + 4 + len) else {
                return tampered("record extends past end of file".into());
            };
            pos += 4 + len;
            if let Err(reason) = self.check_record(height, body) {
                return tampered(reason);
            }
        }
    }

    fn check_record(&mut self, height: u64, body: &[u8]) -> Result<(), String> {
        let record: RawRecord =
            serde_json::from_slice(body).map_err(|e| format!("undecodable record: {e}"))?;
        if !is_canonical(body) {
            return Err("record is not in canonical form".into());
        }
        // Every subtree of a canonical document is itself canonical, so each
        // tx hash is taken straight over its slice of the record.
        let tx_hashes: Vec<Hash> = record.txs.iter().map(|tx| sha256(tx.get().as_bytes())).collect();
        let record = record.parse().map_err(|e| format!("undecodable record: {e}"))?;
        let header = &record.header;
        if header.height != height {
            return Err(format!("header claims height {}", header.height));
        }
        let expected_prev = self.hashes.last().copied().unwrap_or(Hash::ZERO);
        if header.prev_hash != expected_prev {
            return Err("prevHash does not match predecessor".into());
        }
        let computed = hash_block(header);
        if computed != record.hash {
            return Err("stored hash does not match header".into());
        }
        if sha256_concat(tx_hashes.iter().map(|h| h.as_bytes().as_slice())) != header.tx_root {
            return Err("txRoot does not match transactions".into());
        }
        if record.txs.len() != record.validation.len() {
            return Err("validation list length differs from tx list".into());
        }
        for (i, (tx, code)) in record.txs.iter().zip(&record.validation).enumerate() {
            let reads_match = tx
                .rwset
                .reads
                .iter()
                .all(|r| self.state.version_of(&r.key) == r.version);
            match code {
                ValidationCode::Valid if !reads_match => {
                    return Err(format!("tx {i} flagged VALID but its reads are stale"));
                }
                ValidationCode::MvccConflict if reads_match => {
                    return Err(format!("tx {i} flagged MVCC_CONFLICT but its reads are current"));
                }
                ValidationCode::Valid => {
                    self.state.apply_writes(&tx.rwset.writes, Version::new(height, i as u32));
                }
                _ => {}
            }
        }
        self.hashes.push(computed);
        self.blocks.push(record.into_block());
        Ok(())
    }
}

#[cfg(test)]
mod tests;
