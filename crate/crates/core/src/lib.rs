// SPDX-License-Identifier: Apache-2.0

//! A desk-scale permissioned ledger for electronic medical records.
//!
//! Transactions follow an execute-order-validate flow: endorsers simulate
//! chaincode against a committed snapshot ([`txflow`]), a pluggable ordering
//! service sequences the endorsed results ([`consensus`]), and every peer
//! validates and commits them to a hash-chained block store ([`ledger`]).
//! Identity material lives on-ledger while credentials stay with their
//! holders ([`identity`]); the medical record application is the [`ehr`]
//! chaincode. [`netsim`] drives whole networks in simulated time.

pub mod codec;
pub mod consensus;
pub mod crypto;
pub mod ehr;
pub mod fixtures;
pub mod identity;
pub mod ledger;
pub mod netsim;
pub mod node;
pub mod txflow;
