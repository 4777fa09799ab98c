//! Contrastive auditing of Solidity business logic.
//!
//! The pipeline mines guard conditions from a reference corpus into a small
//! specification language (`order(check[...], action)`), stores them next to
//! an embedding of each function's functional description, and audits a
//! target function against the conditions that a majority of semantically
//! equivalent references enforce.

pub mod aggregate;
pub mod bsl;
pub mod checker;
pub mod corpus;
pub mod evalkit;
pub mod fsutil;
pub mod knowledge;
pub mod llm;
pub mod miner;
pub mod solidity;
pub mod store;
