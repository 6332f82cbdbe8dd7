//! Speculative Byzantine fault-tolerant replication with a single active
//! trusted monotonic counter, alongside two baseline speculative protocols,
//! a deterministic adversarial network simulator, and a feasibility analyzer
//! for the underlying hybrid fault model.

pub mod app;
pub mod baselines;
pub mod client;
pub mod config;
pub mod crypto;
pub mod feasibility;
pub mod harness;
pub mod messages;
pub mod replica;
pub mod simnet;
pub mod tmc;
pub mod transcript;
