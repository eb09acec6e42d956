// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::json;
use thiserror::Error;

use super::{
    cred_def_key, did_key, revocation_key, schema_key, CredentialDefinition, DidRecord,
    RevocationRegistry, Role, Schema, StateReader,
};
use crate::codec::canonical_bytes;
use crate::crypto::{sha256_concat, Hash, KeyPair, Signature};
use crate::ledger::WorldState;

macro_rules! hex16 {
    ($name:ident) => {
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub [u8; 16]);

        impl $name {
            pub fn random<R: RngCore>(rng: &mut R) -> Self {
                let mut b = [0u8; 16];
                rng.fill_bytes(&mut b);
                $name(b)
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            pub fn from_hex(s: &str) -> Option<Self> {
                if s.bytes().any(|b| b.is_ascii_uppercase()) {
                    return None;
                }
                let mut b = [0u8; 16];
                hex::decode_to_slice(s, &mut b).ok()?;
                Some($name(b))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.to_hex())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                $name::from_hex(&s).ok_or_else(|| serde::de::Error::custom("expected 32 lowercase hex chars"))
            }
        }
    };
}

hex16!(Salt);
hex16!(Nonce);

/// `SHA-256(name || 0x00 || salt || 0x00 || value)`.
pub fn attr_digest(name: &str, salt: &Salt, value: &str) -> Hash {
    sha256_concat([name.as_bytes(), &[0u8], &salt.0, &[0u8], value.as_bytes()])
}

/// Held off-ledger by its subject; never part of a transaction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Credential {
    pub cred_id: String,
    pub cred_def_id: String,
    pub holder_did: String,
    pub attrs: BTreeMap<String, String>,
    pub salts: BTreeMap<String, Salt>,
    pub issuer_signature: Signature,
}

impl Credential {
    pub fn digests(&self) -> BTreeMap<String, Hash> {
        self.attrs
            .iter()
            .map(|(name, value)| {
                let salt = self.salts.get(name).copied().unwrap_or(Salt([0; 16]));
                (name.clone(), attr_digest(name, &salt, value))
            })
            .collect()
    }
}

fn issuer_message(
    cred_id: &str,
    cred_def_id: &str,
    holder_did: &str,
    digests: &BTreeMap<String, Hash>,
) -> Vec<u8> {
    canonical_bytes(&json!({
        "credDefId": cred_def_id,
        "credId": cred_id,
        "digests": digests,
        "holderDid": holder_did,
    }))
}

fn holder_message(cred_id: &str, nonce: &Nonce, disclosed: &BTreeMap<String, DisclosedAttr>) -> Vec<u8> {
    let names: Vec<&String> = disclosed.keys().collect();
    canonical_bytes(&json!({ "credId": cred_id, "disclosed": names, "nonce": nonce }))
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IssueError {
    #[error("credential definition {0} not on ledger")]
    UnknownCredDef(String),
    #[error("schema {0} not on ledger")]
    UnknownSchema(String),
    #[error("issuing key does not match the on-ledger key of {0}")]
    WrongIssuerKey(String),
    #[error("attributes {got:?} do not match schema attributes {expected:?}")]
    AttrMismatch { expected: Vec<String>, got: Vec<String> },
}

/// Issues a credential off-line. Draws a fresh salt per attribute; writes
/// nothing to the ledger.
pub fn issue_credential<R: RngCore + CryptoRng>(
    issuer_key: &KeyPair,
    ledger: &WorldState,
    cred_def_id: &str,
    holder_did: &str,
    attrs: BTreeMap<String, String>,
    rng: &mut R,
) -> Result<Credential, IssueError> {
    let mut reader = ledger;
    let cred_def: CredentialDefinition = reader
        .read_json(&cred_def_key(cred_def_id))
        .ok_or_else(|| IssueError::UnknownCredDef(cred_def_id.to_string()))?;
    let schema: Schema = reader
        .read_json(&schema_key(&cred_def.schema_id))
        .ok_or_else(|| IssueError::UnknownSchema(cred_def.schema_id.clone()))?;
    let issuer: Option<DidRecord> = reader.read_json(&did_key(&cred_def.issuer_did));
    if issuer.map(|r| r.verification_key) != Some(issuer_key.public()) {
        return Err(IssueError::WrongIssuerKey(cred_def.issuer_did));
    }
    let mut expected = schema.attr_names.clone();
    expected.sort();
    let got: Vec<String> = attrs.keys().cloned().collect();
    if expected != got {
        return Err(IssueError::AttrMismatch { expected, got });
    }

    let cred_id = format!("cred-{}", uuid::Builder::from_random_bytes(Nonce::random(rng).0).into_uuid());
    let salts: BTreeMap<String, Salt> = attrs.keys().map(|k| (k.clone(), Salt::random(rng))).collect();
    let mut cred = Credential {
        cred_id,
        cred_def_id: cred_def_id.to_string(),
        holder_did: holder_did.to_string(),
        attrs,
        salts,
        issuer_signature: Signature::from_bytes([0; 64]),
    };
    let msg = issuer_message(&cred.cred_id, &cred.cred_def_id, &cred.holder_did, &cred.digests());
    cred.issuer_signature = issuer_key.sign(&msg);
    Ok(cred)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisclosedAttr {
    pub value: String,
    pub salt: Salt,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Presentation {
    pub cred_id: String,
    pub cred_def_id: String,
    pub holder_did: String,
    pub disclosed: BTreeMap<String, DisclosedAttr>,
    pub digests: BTreeMap<String, Hash>,
    pub issuer_signature: Signature,
    pub nonce: Nonce,
    pub holder_signature: Signature,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PresentError {
    #[error("credential has no attribute {0}")]
    UnknownAttr(String),
}

/// Builds a presentation revealing only `disclose`. An empty set proves
/// possession and holder binding alone.
pub fn create_presentation(
    credential: &Credential,
    holder_key: &KeyPair,
    disclose: &[&str],
    nonce: Nonce,
) -> Result<Presentation, PresentError> {
    let mut disclosed = BTreeMap::new();
    for &name in disclose {
        let (Some(value), Some(salt)) = (credential.attrs.get(name), credential.salts.get(name)) else {
            return Err(PresentError::UnknownAttr(name.to_string()));
        };
        disclosed.insert(name.to_string(), DisclosedAttr { value: value.clone(), salt: *salt });
    }
    let holder_signature = holder_key.sign(&holder_message(&credential.cred_id, &nonce, &disclosed));
    Ok(Presentation {
        cred_id: credential.cred_id.clone(),
        cred_def_id: credential.cred_def_id.clone(),
        holder_did: credential.holder_did.clone(),
        disclosed,
        digests: credential.digests(),
        issuer_signature: credential.issuer_signature,
        nonce,
        holder_signature,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    #[error("unknown-cred-def")]
    UnknownCredDef,
    #[error("unknown-schema")]
    UnknownSchema,
    #[error("unknown-issuer")]
    UnknownIssuer,
    #[error("schema-mismatch")]
    SchemaMismatch,
    #[error("bad-issuer-signature")]
    BadIssuerSignature,
    #[error("digest-mismatch")]
    DigestMismatch,
    #[error("unknown-holder")]
    UnknownHolder,
    #[error("bad-holder-signature")]
    BadHolderSignature,
    #[error("revoked")]
    Revoked,
    #[error("nonce-mismatch")]
    NonceMismatch,
    #[error("nonce-replay")]
    NonceReplay,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::UnknownCredDef => "unknown-cred-def",
            RejectReason::UnknownSchema => "unknown-schema",
            RejectReason::UnknownIssuer => "unknown-issuer",
            RejectReason::SchemaMismatch => "schema-mismatch",
            RejectReason::BadIssuerSignature => "bad-issuer-signature",
            RejectReason::DigestMismatch => "digest-mismatch",
            RejectReason::UnknownHolder => "unknown-holder",
            RejectReason::BadHolderSignature => "bad-holder-signature",
            RejectReason::Revoked => "revoked",
            RejectReason::NonceMismatch => "nonce-mismatch",
            RejectReason::NonceReplay => "nonce-replay",
        }
    }
}

/// Checks a presentation against on-ledger artifacts:
/// credDef and issuer exist, the issuer signed the digest map, each disclosed
/// pair re-hashes to its digest, the holder signed over the nonce with the
/// key registered for `holderDid`, and the credential is not revoked.
/// `expected_nonce`, when given, must equal the presentation's nonce.
pub fn verify_presentation<S: StateReader>(
    pres: &Presentation,
    ledger: &mut S,
    expected_nonce: Option<Nonce>,
) -> Result<(), RejectReason> {
    if expected_nonce.is_some_and(|n| n != pres.nonce) {
        return Err(RejectReason::NonceMismatch);
    }
    let cred_def: CredentialDefinition =
        ledger.read_json(&cred_def_key(&pres.cred_def_id)).ok_or(RejectReason::UnknownCredDef)?;
    let issuer: DidRecord =
        ledger.read_json(&did_key(&cred_def.issuer_did)).ok_or(RejectReason::UnknownIssuer)?;
    if issuer.role != Role::Issuer {
        return Err(RejectReason::UnknownIssuer);
    }
    let schema: Schema =
        ledger.read_json(&schema_key(&cred_def.schema_id)).ok_or(RejectReason::UnknownSchema)?;
    let schema_attrs: std::collections::BTreeSet<&String> = schema.attr_names.iter().collect();
    if !pres.digests.keys().eq(schema_attrs.iter().copied())
        || !pres.disclosed.keys().all(|k| schema_attrs.contains(k))
    {
        return Err(RejectReason::SchemaMismatch);
    }

    let msg = issuer_message(&pres.cred_id, &pres.cred_def_id, &pres.holder_did, &pres.digests);
    if !issuer.verification_key.verify(&msg, &pres.issuer_signature) {
        return Err(RejectReason::BadIssuerSignature);
    }
    for (name, d) in &pres.disclosed {
        if pres.digests.get(name) != Some(&attr_digest(name, &d.salt, &d.value)) {
            return Err(RejectReason::DigestMismatch);
        }
    }
    let holder: DidRecord =
        ledger.read_json(&did_key(&pres.holder_did)).ok_or(RejectReason::UnknownHolder)?;
    let msg = holder_message(&pres.cred_id, &pres.nonce, &pres.disclosed);
    if !holder.verification_key.verify(&msg, &pres.holder_signature) {
        return Err(RejectReason::BadHolderSignature);
    }
    let registry: RevocationRegistry =
        ledger.read_json(&revocation_key(&pres.cred_def_id)).unwrap_or_default();
    if registry.revoked_cred_ids.contains(&pres.cred_id) {
        return Err(RejectReason::Revoked);
    }
    Ok(())
}

/// An off-chain verifier session: hands out nonces and accepts each at most
/// once.
#[derive(Debug, Default)]
pub struct Verifier {
    issued: HashSet<Nonce>,
    used: HashSet<Nonce>,
}

impl Verifier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn challenge<R: RngCore>(&mut self, rng: &mut R) -> Nonce {
        let n = Nonce::random(rng);
        self.issued.insert(n);
        n
    }

    pub fn verify(&mut self, pres: &Presentation, ledger: &WorldState) -> Result<(), RejectReason> {
        if self.used.contains(&pres.nonce) {
            return Err(RejectReason::NonceReplay);
        }
        if !self.issued.contains(&pres.nonce) {
            return Err(RejectReason::NonceMismatch);
        }
        verify_presentation(pres, &mut &*ledger, None)?;
        self.used.insert(pres.nonce);
        Ok(())
    }
}
