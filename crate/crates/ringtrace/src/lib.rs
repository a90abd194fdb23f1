//! Traceability analysis for ring-signature ledgers.
//!
//! The crate is organized as a pipeline over an immutable [`chain::ChainStore`]:
//!
//! - [`ingest`] parses chain, payout, ground-truth and label files;
//! - [`heuristics`] hosts the labeling passes, each a pure function
//!   `ChainStore (+ aux data) → LabelSet`;
//! - [`reaction`] runs the chain-reaction fixpoint that eliminates known
//!   decoys and promotes last-standing ring members;
//! - [`metrics`] computes precision, self-collision and pairwise
//!   agreement statistics plus the time-bucketed report series;
//! - [`synth`] generates deterministic synthetic ledgers with full
//!   ground truth for validation;
//! - [`cli`] wires everything into the `ringtrace` binary.

pub mod chain;
pub mod cli;
pub mod heuristics;
pub mod ingest;
pub mod labels;
pub mod metrics;
pub mod reaction;
pub mod synth;
