// SPDX-License-Identifier: Apache-2.0

//! IAM chaincode. Every function's last argument is the acting principal's
//! signature over the canonical `{"action", "args"}` of the preceding
//! arguments, so a gateway may submit on a principal's behalf.

use serde_json::json;

use super::{
    cred_def_key, did_key, revocation_key, schema_key, valid_id, CredentialDefinition, DidKey,
    DidRecord, RevocationRegistry, Role, Schema,
};
use crate::codec::canonical_bytes;
use crate::crypto::{KeyPair, PublicKey, Signature};
use crate::txflow::{ChaincodeError, ChaincodeRegistry, TxContext};

pub const REGISTER_DID: &str = "register_did";
pub const PUBLISH_SCHEMA: &str = "publish_schema";
pub const PUBLISH_CRED_DEF: &str = "publish_cred_def";
pub const REVOKE_CREDENTIAL: &str = "revoke_credential";

pub fn register_chaincode(registry: &mut ChaincodeRegistry) {
    registry.register(REGISTER_DID, register_did);
    registry.register(PUBLISH_SCHEMA, publish_schema);
    registry.register(PUBLISH_CRED_DEF, publish_cred_def);
    registry.register(REVOKE_CREDENTIAL, revoke_credential);
}

fn actor_message(action: &str, args: &[String]) -> Vec<u8> {
    canonical_bytes(&json!({ "action": action, "args": args }))
}

fn signed(action: &str, mut args: Vec<String>, key: &KeyPair) -> Vec<String> {
    let sig = key.sign(&actor_message(action, &args));
    args.push(sig.to_hex());
    args
}

/// `[did, verificationKey, role, proof]`; the proof is made with the key
/// being registered.
pub fn register_did_args(id: &DidKey) -> Vec<String> {
    let args = vec![id.did.clone(), id.secret_key.public().to_hex(), id.role.as_str().to_string()];
    signed(REGISTER_DID, args, &id.secret_key)
}

/// `[issuerDid, schemaJson, signature]`.
pub fn publish_schema_args(issuer: &DidKey, schema: &Schema) -> Vec<String> {
    let body = String::from_utf8(canonical_bytes(schema)).expect("utf8");
    signed(PUBLISH_SCHEMA, vec![issuer.did.clone(), body], &issuer.secret_key)
}

/// `[issuerDid, credDefJson, signature]`.
pub fn publish_cred_def_args(issuer: &DidKey, cred_def: &CredentialDefinition) -> Vec<String> {
    let body = String::from_utf8(canonical_bytes(cred_def)).expect("utf8");
    signed(PUBLISH_CRED_DEF, vec![issuer.did.clone(), body], &issuer.secret_key)
}

/// `[issuerDid, credDefId, credId, signature]`.
pub fn revoke_credential_args(issuer: &DidKey, cred_def_id: &str, cred_id: &str) -> Vec<String> {
    let args = vec![issuer.did.clone(), cred_def_id.to_string(), cred_id.to_string()];
    signed(REVOKE_CREDENTIAL, args, &issuer.secret_key)
}

/// Splits off the trailing signature and checks it against `key`.
fn check_actor(ctx: &TxContext<'_>, action: &str, key: &PublicKey) -> Result<(), ChaincodeError> {
    let args = ctx.args();
    let (sig, rest) = args
        .split_last()
        .ok_or_else(|| ChaincodeError::bad_request("missing actor signature"))?;
    let sig = Signature::from_hex(sig).ok_or_else(|| ChaincodeError::auth("malformed actor signature"))?;
    if !key.verify(&actor_message(action, rest), &sig) {
        return Err(ChaincodeError::auth("actor signature does not verify"));
    }
    Ok(())
}

/// Resolves `did` on-ledger and requires the given role.
fn load_actor(ctx: &mut TxContext<'_>, did: &str, role: Role) -> Result<DidRecord, ChaincodeError> {
    let record: DidRecord = ctx
        .get_json(&did_key(did))?
        .ok_or_else(|| ChaincodeError::auth(format!("{did} is not registered")))?;
    if record.role != role {
        return Err(ChaincodeError::auth(format!("{did} does not have role {role}")));
    }
    Ok(record)
}

fn register_did(ctx: &mut TxContext<'_>) -> Result<(), ChaincodeError> {
    if ctx.args().len() != 4 {
        return Err(ChaincodeError::bad_request("register_did takes did, key, role, proof"));
    }
    let did = ctx.arg(0)?.to_string();
    if !did.starts_with("did:qb:") {
        return Err(ChaincodeError::bad_request(format!("{did} is not a did:qb identifier")));
    }
    valid_id(&did).map_err(ChaincodeError::bad_request)?;
    let key = PublicKey::from_hex(ctx.arg(1)?)
        .ok_or_else(|| ChaincodeError::bad_request("invalid verification key"))?;
    let role = Role::parse(ctx.arg(2)?).ok_or_else(|| ChaincodeError::bad_request("unknown role"))?;
    check_actor(ctx, REGISTER_DID, &key)?;
    let k = did_key(&did);
    if ctx.get_state(&k).is_some() {
        return Err(ChaincodeError::conflict(format!("{did} already registered")));
    }
    ctx.put_json(k, &DidRecord { did, verification_key: key, role });
    Ok(())
}

fn publish_schema(ctx: &mut TxContext<'_>) -> Result<(), ChaincodeError> {
    let issuer_did = ctx.arg(0)?.to_string();
    let schema: Schema = ctx.arg_json(1)?;
    let issuer = load_actor(ctx, &issuer_did, Role::Issuer)?;
    check_actor(ctx, PUBLISH_SCHEMA, &issuer.verification_key)?;
    schema.validate().map_err(ChaincodeError::bad_request)?;
    let k = schema_key(&schema.schema_id);
    if ctx.get_state(&k).is_some() {
        return Err(ChaincodeError::conflict(format!("schema {} exists", schema.schema_id)));
    }
    ctx.put_json(k, &schema);
    Ok(())
}

fn publish_cred_def(ctx: &mut TxContext<'_>) -> Result<(), ChaincodeError> {
    let issuer_did = ctx.arg(0)?.to_string();
    let cred_def: CredentialDefinition = ctx.arg_json(1)?;
    let issuer = load_actor(ctx, &issuer_did, Role::Issuer)?;
    check_actor(ctx, PUBLISH_CRED_DEF, &issuer.verification_key)?;
    if cred_def.issuer_did != issuer_did {
        return Err(ChaincodeError::auth("credential definition names a different issuer"));
    }
    valid_id(&cred_def.cred_def_id).map_err(ChaincodeError::bad_request)?;
    if ctx.get_state(&schema_key(&cred_def.schema_id)).is_none() {
        return Err(ChaincodeError::not_found(format!("schema {} not found", cred_def.schema_id)));
    }
    let k = cred_def_key(&cred_def.cred_def_id);
    if ctx.get_state(&k).is_some() {
        return Err(ChaincodeError::conflict(format!("credDef {} exists", cred_def.cred_def_id)));
    }
    ctx.put_json(k, &cred_def);
    Ok(())
}

fn revoke_credential(ctx: &mut TxContext<'_>) -> Result<(), ChaincodeError> {
    let issuer_did = ctx.arg(0)?.to_string();
    let cred_def_id = ctx.arg(1)?.to_string();
    let cred_id = ctx.arg(2)?.to_string();
    let issuer = load_actor(ctx, &issuer_did, Role::Issuer)?;
    check_actor(ctx, REVOKE_CREDENTIAL, &issuer.verification_key)?;
    let cred_def: CredentialDefinition = ctx
        .get_json(&cred_def_key(&cred_def_id))?
        .ok_or_else(|| ChaincodeError::not_found(format!("credDef {cred_def_id} not found")))?;
    if cred_def.issuer_did != issuer_did {
        return Err(ChaincodeError::auth("only the credential definition's issuer may revoke"));
    }
    let k = revocation_key(&cred_def_id);
    let mut registry: RevocationRegistry = ctx.get_json(&k)?.unwrap_or_else(|| RevocationRegistry {
        cred_def_id: cred_def_id.clone(),
        ..Default::default()
    });
    if registry.revoked_cred_ids.insert(cred_id) {
        ctx.put_json(k, &registry);
    }
    Ok(())
}
