// SPDX-License-Identifier: Apache-2.0

//! HTTP gateway and command line for a quebian node.
//!
//! Every write endpoint turns its body into one chaincode call ([`wire`]),
//! signs it with the gateway's DID, and answers once the transaction is in a
//! block. Principals authenticate with a presentation in the body or a
//! signature in the arguments, never with a session.

pub mod cli;
pub mod config;
pub mod error;
pub mod http;
pub mod service;
pub mod wire;

pub use error::{ApiError, ErrorCode};
pub use http::{router, ROUTES};
pub use service::Gateway;
