// SPDX-License-Identifier: Apache-2.0

//! Self-sovereign identity: DIDs, schemas, credential definitions and
//! revocation registries live on the ledger; credentials stay with their
//! holders and are shown as selective-disclosure presentations.
//!
//! A credential commits to each attribute with a salted digest
//! `SHA-256(name || 0x00 || salt || 0x00 || value)`. The issuer signs the
//! digest map; a presentation reveals (value, salt) pairs for chosen
//! attributes only, and the holder signs over the verifier's nonce.

pub mod chaincode;
mod credential;

use std::fmt;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

pub use chaincode::{
    publish_cred_def_args, publish_schema_args, register_chaincode, register_did_args,
    revoke_credential_args, PUBLISH_CRED_DEF, PUBLISH_SCHEMA, REGISTER_DID, REVOKE_CREDENTIAL,
};
pub use credential::{
    attr_digest, create_presentation, issue_credential, verify_presentation,
    Credential, DisclosedAttr, IssueError, Nonce, PresentError, Presentation, RejectReason,
    Salt, Verifier,
};

use crate::crypto::{KeyPair, PublicKey};
use crate::ledger::WorldState;
use crate::txflow::TxContext;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    Issuer,
    Holder,
    Verifier,
    Endorser,
    Orderer,
}

impl Role {
    pub fn parse(s: &str) -> Option<Role> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_uppercase())).ok()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Issuer => "ISSUER",
            Role::Holder => "HOLDER",
            Role::Verifier => "VERIFIER",
            Role::Endorser => "ENDORSER",
            Role::Orderer => "ORDERER",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DidRecord {
    pub did: String,
    pub verification_key: PublicKey,
    pub role: Role,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Schema {
    pub schema_id: String,
    pub name: String,
    pub version: String,
    pub attr_names: Vec<String>,
}

impl Schema {
    pub fn validate(&self) -> Result<(), String> {
        valid_id(&self.schema_id)?;
        if self.attr_names.is_empty() {
            return Err("schema needs at least one attribute".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for a in &self.attr_names {
            if a.is_empty() || !seen.insert(a.as_str()) {
                return Err(format!("empty or duplicate attribute name {a:?}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CredentialDefinition {
    pub cred_def_id: String,
    pub issuer_did: String,
    pub schema_id: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RevocationRegistry {
    pub cred_def_id: String,
    pub revoked_cred_ids: std::collections::BTreeSet<String>,
}

pub fn did_key(did: &str) -> String {
    format!("iam/did/{did}")
}

pub fn schema_key(schema_id: &str) -> String {
    format!("iam/schema/{schema_id}")
}

pub fn cred_def_key(cred_def_id: &str) -> String {
    format!("iam/creddef/{cred_def_id}")
}

pub fn revocation_key(cred_def_id: &str) -> String {
    format!("iam/revocation/{cred_def_id}")
}

/// Single-use marker for a presentation nonce consumed on-ledger.
pub fn nonce_key(nonce: &Nonce) -> String {
    format!("iam/nonce/{}", nonce.to_hex())
}

/// Ids become key path segments, so they may not be empty or contain '/'.
pub fn valid_id(id: &str) -> Result<(), String> {
    if id.is_empty() || id.contains('/') || id.chars().any(char::is_control) {
        Err(format!("invalid id {id:?}"))
    } else {
        Ok(())
    }
}

/// A fresh `did:qb:<uuid>` drawn from `rng`.
pub fn new_did<R: RngCore>(rng: &mut R) -> String {
    let mut bytes = [0u8; 16];
    rng.fill_bytes(&mut bytes);
    format!("did:qb:{}", uuid::Builder::from_random_bytes(bytes).into_uuid())
}

/// Source of committed values for lookups that may need to be recorded in a
/// read set.
pub trait StateReader {
    fn read(&mut self, key: &str) -> Option<Vec<u8>>;

    fn read_json<T: serde::de::DeserializeOwned>(&mut self, key: &str) -> Option<T> {
        self.read(key).and_then(|b| serde_json::from_slice(&b).ok())
    }
}

impl StateReader for &WorldState {
    fn read(&mut self, key: &str) -> Option<Vec<u8>> {
        self.get(key).map(|v| v.value.clone())
    }
}

impl StateReader for TxContext<'_> {
    fn read(&mut self, key: &str) -> Option<Vec<u8>> {
        self.get_state(key)
    }
}

/// Looks up a DID's verification key through a raw key-value accessor.
pub fn lookup_did_key<'a>(did: &str, lookup: impl Fn(&str) -> Option<&'a [u8]>) -> Option<PublicKey> {
    let bytes = lookup(&did_key(did))?;
    serde_json::from_slice::<DidRecord>(bytes).ok().map(|r| r.verification_key)
}

/// A DID with its signing key, as held in a wallet key file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DidKey {
    pub did: String,
    pub role: Role,
    #[serde(with = "seed_hex")]
    pub secret_key: KeyPair,
}

impl DidKey {
    pub fn generate<R: RngCore + CryptoRng>(role: Role, rng: &mut R) -> Self {
        DidKey { did: new_did(rng), role, secret_key: KeyPair::generate(rng) }
    }

    pub fn record(&self) -> DidRecord {
        DidRecord { did: self.did.clone(), verification_key: self.secret_key.public(), role: self.role }
    }
}

mod seed_hex {
    use crate::crypto::KeyPair;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(key: &KeyPair, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&key.seed_hex())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<KeyPair, D::Error> {
        let s = String::deserialize(d)?;
        KeyPair::from_seed_hex(&s).ok_or_else(|| serde::de::Error::custom("bad secret key"))
    }
}

#[cfg(test)]
mod tests;
