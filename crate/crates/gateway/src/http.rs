// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use quebian_core::ehr::{DoctorRegistration, HospitalRegistration, MedicalRecord, PatientRegistration};
use quebian_core::ledger::verify_chain;
use quebian_core::node::TxOutcome;
use serde::de::DeserializeOwned;

use crate::error::{ApiError, ErrorCode};
use crate::service::{Gateway, GatewayMetrics};
use crate::wire::{
    self, BlockView, ConsentBody, CredDefRequest, DidRequest, NonceResponse, RecordQuery, RecordRequest,
    RevocationRequest, SchemaRequest, TxStatus, VerifyChainResponse, VerifyRequest, VerifyResponse,
};

/// Every route the gateway serves. None updates or deletes a record.
pub const ROUTES: &[(&str, &str)] = &[
    ("POST", "/hospitals"),
    ("POST", "/doctors"),
    ("POST", "/patients"),
    ("POST", "/records"),
    ("GET", "/records"),
    ("POST", "/consents/grant"),
    ("POST", "/consents/revoke"),
    ("POST", "/iam/dids"),
    ("POST", "/iam/schemas"),
    ("POST", "/iam/creddefs"),
    ("POST", "/iam/revocations"),
    ("POST", "/iam/verify"),
    ("GET", "/iam/nonce"),
    ("GET", "/ledger/blocks/{height}"),
    ("GET", "/ledger/verify"),
    ("GET", "/metrics"),
    ("GET", "/txs/{tx_id}"),
];

type Gw = State<Arc<Gateway>>;

/// `Json` whose rejections are [`ApiError`]s.
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        Json::<T>::from_request(req, state)
            .await
            .map(|Json(v)| ApiJson(v))
            .map_err(|e: JsonRejection| ApiError::bad_request(e.body_text()).with_status(e.status()))
    }
}

pub struct ApiQuery<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for ApiQuery<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, ApiError> {
        Query::<T>::from_request_parts(parts, state)
            .await
            .map(|Query(v)| ApiQuery(v))
            .map_err(|e: QueryRejection| ApiError::bad_request(e.body_text()))
    }
}

pub struct ApiPath<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned + Send> FromRequestParts<S> for ApiPath<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, ApiError> {
        Path::<T>::from_request_parts(parts, state)
            .await
            .map(|Path(v)| ApiPath(v))
            .map_err(|e: PathRejection| ApiError::bad_request(e.body_text()))
    }
}

type Created = (StatusCode, Json<TxOutcome>);

async fn write(gw: &Gateway, call: wire::Call) -> Result<Created, ApiError> {
    gw.submit(call).await.map(|out| (StatusCode::CREATED, Json(out)))
}

async fn post_hospital(State(gw): Gw, ApiJson(reg): ApiJson<HospitalRegistration>) -> Result<Created, ApiError> {
    write(&gw, wire::register_hospital(&reg)).await
}

async fn post_doctor(State(gw): Gw, ApiJson(reg): ApiJson<DoctorRegistration>) -> Result<Created, ApiError> {
    write(&gw, wire::register_doctor(&reg)).await
}

async fn post_patient(State(gw): Gw, ApiJson(reg): ApiJson<PatientRegistration>) -> Result<Created, ApiError> {
    write(&gw, wire::register_patient(&reg)).await
}

async fn post_record(State(gw): Gw, ApiJson(req): ApiJson<RecordRequest>) -> Result<Created, ApiError> {
    write(&gw, req.call()).await
}

async fn get_records(State(gw): Gw, ApiQuery(q): ApiQuery<RecordQuery>) -> Result<Json<Vec<MedicalRecord>>, ApiError> {
    gw.read(|l| q.run(l.state())).map(Json)
}

async fn grant(State(gw): Gw, ApiJson(req): ApiJson<ConsentBody>) -> Result<Created, ApiError> {
    write(&gw, req.call(true)).await
}

async fn revoke(State(gw): Gw, ApiJson(req): ApiJson<ConsentBody>) -> Result<Created, ApiError> {
    write(&gw, req.call(false)).await
}

async fn post_did(State(gw): Gw, ApiJson(req): ApiJson<DidRequest>) -> Result<Created, ApiError> {
    write(&gw, req.call()).await
}

async fn post_schema(State(gw): Gw, ApiJson(req): ApiJson<SchemaRequest>) -> Result<Created, ApiError> {
    write(&gw, req.call()).await
}

async fn post_cred_def(State(gw): Gw, ApiJson(req): ApiJson<CredDefRequest>) -> Result<Created, ApiError> {
    write(&gw, req.call()).await
}

async fn post_revocation(State(gw): Gw, ApiJson(req): ApiJson<RevocationRequest>) -> Result<Created, ApiError> {
    write(&gw, req.call()).await
}

async fn verify_presentation(State(gw): Gw, ApiJson(req): ApiJson<VerifyRequest>) -> Json<VerifyResponse> {
    let result = gw.verify(&req.presentation);
    Json(VerifyResponse::from_result(&req.presentation, result))
}

async fn nonce(State(gw): Gw) -> Json<NonceResponse> {
    Json(NonceResponse { nonce: gw.challenge() })
}

async fn block(State(gw): Gw, ApiPath(height): ApiPath<u64>) -> Result<Json<BlockView>, ApiError> {
    gw.read(|l| l.block(height).map(BlockView::from))
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("no block at height {height}")))
}

/// Verifies the ledger file on disk, or the in-memory chain when there is
/// none.
async fn verify_ledger(State(gw): Gw) -> Result<Json<VerifyChainResponse>, ApiError> {
    let (path, report) = gw.read(|l| (l.path().map(|p| p.to_path_buf()), l.verify()));
    let report = match path {
        Some(p) => verify_chain(&p).map_err(|e| ApiError::internal(format!("reading ledger: {e}")))?,
        None => report,
    };
    Ok(Json(report.into()))
}

async fn metrics(State(gw): Gw) -> Json<GatewayMetrics> {
    Json(gw.metrics())
}

async fn tx(State(gw): Gw, ApiPath(tx_id): ApiPath<String>) -> Result<Json<TxStatus>, ApiError> {
    gw.tx_status(&tx_id).map(Json).ok_or_else(|| ApiError::not_found(format!("unknown transaction {tx_id}")))
}

async fn no_route() -> ApiError {
    ApiError::new(ErrorCode::NotFound, "no such route")
}

async fn bad_method() -> Response {
    ApiError::bad_request("method not allowed").with_status(StatusCode::METHOD_NOT_ALLOWED).into_response()
}

pub fn router(gw: Arc<Gateway>) -> Router {
    Router::new()
        .route("/hospitals", post(post_hospital))
        .route("/doctors", post(post_doctor))
        .route("/patients", post(post_patient))
        .route("/records", post(post_record).get(get_records))
        .route("/consents/grant", post(grant))
        .route("/consents/revoke", post(revoke))
        .route("/iam/dids", post(post_did))
        .route("/iam/schemas", post(post_schema))
        .route("/iam/creddefs", post(post_cred_def))
        .route("/iam/revocations", post(post_revocation))
        .route("/iam/verify", post(verify_presentation))
        .route("/iam/nonce", get(nonce))
        .route("/ledger/blocks/{height}", get(block))
        .route("/ledger/verify", get(verify_ledger))
        .route("/metrics", get(metrics))
        .route("/txs/{tx_id}", get(tx))
        .fallback(no_route)
        .method_not_allowed_fallback(bad_method)
        .with_state(gw)
}

/// Serves `gw` on `listener` until the task is cancelled.
pub async fn serve(gw: Arc<Gateway>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    let _ticker = gw.spawn_ticker();
    axum::serve(listener, router(gw)).await
}
