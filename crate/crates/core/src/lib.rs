//! Concurrent execution of smart-contract transactions for block production
//! and validation.
//!
//! A multi-threaded miner runs atomic units (contract calls) as optimistic
//! STM transactions under timestamp ordering — single-version ([`stm::Protocol::Bto`])
//! or multi-version ([`stm::Protocol::Mvto`]) — and records the conflicts of
//! every committed transaction in a lock-free dependency DAG, the
//! [`graph::BlockGraph`]. The proposed block carries the unit list, the
//! serialized graph, the final state of every shared object and a chained
//! hash. Validator threads then re-execute the same units deterministically,
//! claiming graph source nodes (indegree zero) without any concurrency
//! control, and accept the block iff the recomputed state matches.
//!
//! The [`checker`] module provides offline oracles over recorded execution
//! histories: conflict-graph acyclicity, brute-force multi-version view
//! serializability and opacity on small instances, and graph/history
//! cross-validation.

pub mod block;
pub mod checker;
pub mod contracts;
pub mod graph;
pub mod miner;
pub mod stm;
pub mod validator;

pub use stm::{ObjId, Protocol, Ts};
