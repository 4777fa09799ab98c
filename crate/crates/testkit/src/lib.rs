//! Test support shared by the LogicScan crates.
//!
//! Nothing here depends on the `logicscan` library itself: the oracles are
//! written against plain strings, integers and vectors so that they can be
//! compared with the library's answers without sharing code paths.

pub mod oracle;
pub mod responder;
pub mod server;

pub use responder::FixtureResponder;
pub use server::MockServer;
