//! Deterministic simulator and incentive model for ledger-checked SDN flow
//! insertion.
//!
//! The library has four layers:
//!
//! * [`economics`]: the contract between a verification intermediary and a
//!   verifier whose effort is unobservable, with closed-form optima and a
//!   full-information benchmark.
//! * [`conformance`]: network policy checking at two depths, plus the
//!   deterministic chaincode that endorsing peers execute.
//! * [`protocol`]: the endorse, order, validate, commit pipeline with
//!   canonical encodings, keyed-digest signatures and hash-chained blocks.
//! * [`simnet`]: a tick-driven discrete-event simulation wiring the three
//!   layers together into reproducible scenarios with signed-off metrics.
//!
//! The [`flow`] and [`wire`] modules carry the shared vocabulary: packets,
//! rules, flow identifiers and the canonical byte encoding everything else
//! hashes and signs.

pub mod conformance;
pub mod economics;
pub mod flow;
pub mod protocol;
pub mod simnet;
pub mod wire;
