// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::codec::canonical_bytes;
use crate::crypto::{sha256, sha256_concat, Hash};
use crate::txflow::{EndorsedTransaction, ValidationCode};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: Hash,
    pub tx_root: Hash,
    /// Milliseconds since the epoch (or since simulation start).
    pub timestamp: u64,
}

impl BlockHeader {
    pub fn genesis(timestamp: u64) -> Self {
        BlockHeader { height: 0, prev_hash: Hash::ZERO, tx_root: tx_root(&[]), timestamp }
    }
}

/// SHA-256 over the canonical encoding of the header.
pub fn hash_block(header: &BlockHeader) -> Hash {
    sha256(&canonical_bytes(header))
}

/// Flat digest over the member transaction hashes in block order.
pub fn tx_root(txs: &[EndorsedTransaction]) -> Hash {
    let hashes: Vec<Hash> = txs.iter().map(EndorsedTransaction::hash).collect();
    sha256_concat(hashes.iter().map(|h| h.as_bytes().as_slice()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub header: BlockHeader,
    pub txs: Vec<EndorsedTransaction>,
    pub validation: Vec<ValidationCode>,
}

impl Block {
    pub fn genesis(timestamp: u64) -> Self {
        Block { header: BlockHeader::genesis(timestamp), txs: Vec::new(), validation: Vec::new() }
    }

    pub fn hash(&self) -> Hash {
        hash_block(&self.header)
    }
}

/// On-disk form of a block: the block plus its own header hash, so that a
/// modified tip header is detectable even without a successor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct BlockRecord {
    pub hash: Hash,
    pub header: BlockHeader,
    pub txs: Vec<EndorsedTransaction>,
    pub validation: Vec<ValidationCode>,
}

impl BlockRecord {
    pub fn from_block(block: &Block) -> Self {
        BlockRecord {
            hash: block.hash(),
            header: block.header.clone(),
            txs: block.txs.clone(),
            validation: block.validation.clone(),
        }
    }

    pub fn into_block(self) -> Block {
        Block { header: self.header, txs: self.txs, validation: self.validation }
    }
}

/// A [`BlockRecord`] whose transactions are left as undecoded slices of the
/// record body.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawRecord<'a> {
    hash: Hash,
    header: BlockHeader,
    #[serde(borrow)]
    pub txs: Vec<&'a RawValue>,
    validation: Vec<ValidationCode>,
}

impl RawRecord<'_> {
    pub fn parse(self) -> serde_json::Result<BlockRecord> {
        let txs = self.txs.iter().map(|tx| serde_json::from_str(tx.get())).collect::<Result<_, _>>()?;
        Ok(BlockRecord { hash: self.hash, header: self.header, txs, validation: self.validation })
    }
}
