// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::codec::canonical_bytes;
use crate::crypto::{hex_bytes, sha256, Hash, KeyPair, PublicKey, Signature};
use crate::ledger::Version;

/// Off-ledger inputs handed to chaincode alongside a proposal. Only their
/// digest is signed and recorded.
pub type Transient = BTreeMap<String, String>;

pub fn transient_digest(transient: &Transient) -> Option<Hash> {
    if transient.is_empty() {
        None
    } else {
        Some(sha256(&canonical_bytes(transient)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TxProposal {
    pub tx_id: String,
    pub function: String,
    pub args: Vec<String>,
    pub submitter_did: String,
    pub transient_digest: Option<Hash>,
    pub client_signature: Signature,
}

impl TxProposal {
    /// Builds and signs a proposal with the submitter's key.
    pub fn new_signed(
        tx_id: impl Into<String>,
        function: impl Into<String>,
        args: Vec<String>,
        submitter_did: impl Into<String>,
        transient: &Transient,
        key: &KeyPair,
    ) -> Self {
        let mut p = TxProposal {
            tx_id: tx_id.into(),
            function: function.into(),
            args,
            submitter_did: submitter_did.into(),
            transient_digest: transient_digest(transient),
            client_signature: Signature::from_bytes([0u8; 64]),
        };
        p.client_signature = key.sign(&p.signing_bytes());
        p
    }

    /// Canonical bytes of every field except the signature.
    pub fn signing_bytes(&self) -> Vec<u8> {
        canonical_bytes(&json!({
            "args": self.args,
            "function": self.function,
            "submitterDid": self.submitter_did,
            "transientDigest": self.transient_digest,
            "txId": self.tx_id,
        }))
    }

    pub fn verify_signature(&self, key: &PublicKey) -> bool {
        key.verify(&self.signing_bytes(), &self.client_signature)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ReadEntry {
    pub key: String,
    pub version: Option<Version>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WriteEntry {
    pub key: String,
    #[serde(with = "hex_bytes")]
    pub value: Vec<u8>,
}

/// Keys and versions read, and keys and values written, by one simulated
/// execution. Both lists are sorted by key with no duplicates.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadWriteSet {
    pub reads: Vec<ReadEntry>,
    pub writes: Vec<WriteEntry>,
}

impl ReadWriteSet {
    pub fn from_maps(
        reads: BTreeMap<String, Option<Version>>,
        writes: BTreeMap<String, Vec<u8>>,
    ) -> Self {
        ReadWriteSet {
            reads: reads.into_iter().map(|(key, version)| ReadEntry { key, version }).collect(),
            writes: writes.into_iter().map(|(key, value)| WriteEntry { key, value }).collect(),
        }
    }

    pub fn digest(&self) -> Hash {
        sha256(&canonical_bytes(self))
    }

    pub fn is_well_formed(&self) -> bool {
        self.reads.windows(2).all(|w| w[0].key < w[1].key)
            && self.writes.windows(2).all(|w| w[0].key < w[1].key)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Endorsement {
    pub endorser_id: String,
    pub rwset_digest: Hash,
    pub signature: Signature,
}

impl Endorsement {
    pub fn sign(endorser_id: impl Into<String>, rwset_digest: Hash, key: &KeyPair) -> Self {
        Endorsement {
            endorser_id: endorser_id.into(),
            rwset_digest,
            signature: key.sign(rwset_digest.as_bytes()),
        }
    }

    pub fn verify(&self, key: &PublicKey) -> bool {
        key.verify(self.rwset_digest.as_bytes(), &self.signature)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndorsedTransaction {
    pub proposal: TxProposal,
    pub rwset: ReadWriteSet,
    pub endorsements: Vec<Endorsement>,
}

impl EndorsedTransaction {
    pub fn tx_id(&self) -> &str {
        &self.proposal.tx_id
    }

    /// SHA-256 of the canonical encoding; the unit hashed into a block's txRoot.
    pub fn hash(&self) -> Hash {
        sha256(&canonical_bytes(self))
    }

    /// True when every endorsement names the digest of the attached rwset.
    pub fn digests_consistent(&self) -> bool {
        let digest = self.rwset.digest();
        self.rwset.is_well_formed() && self.endorsements.iter().all(|e| e.rwset_digest == digest)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ValidationCode {
    Valid,
    MvccConflict,
    EndorsementPolicyFailure,
    BadSignature,
    BadFunction,
}

impl ValidationCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ValidationCode::Valid => "VALID",
            ValidationCode::MvccConflict => "MVCC_CONFLICT",
            ValidationCode::EndorsementPolicyFailure => "ENDORSEMENT_POLICY_FAILURE",
            ValidationCode::BadSignature => "BAD_SIGNATURE",
            ValidationCode::BadFunction => "BAD_FUNCTION",
        }
    }
}

impl fmt::Display for ValidationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
