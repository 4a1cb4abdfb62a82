//! Proof kernel, curriculum, session engine, classifier, simulation and
//! statistics for a forward/backward-chaining propositional logic tutor.

// `!(x > 0.0)` is how the validators reject NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod classifier;
pub mod curriculum;
pub mod events;
pub mod formula;
pub mod policy;
pub mod proof;
pub mod prover;
pub mod report;
pub mod rules;
pub mod scoring;
pub mod service;
pub mod sim;
pub mod stats;
