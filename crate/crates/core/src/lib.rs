//! Behavioral fidelity of synthetic transaction data.
//!
//! Real and synthetic tables are ingested with a [`SchemaConfig`] that maps
//! CSV columns onto roles (timestamp, entity, class, amount, shared
//! attributes, ...). Four pattern families are measured between two tables:
//!
//! * P1, inter-event times: W1 of pooled fraud IETs and the gap in mean
//!   within-entity lag-1 autocorrelation ([`temporal`]).
//! * P2, bursts and lifetimes: W1 of burst lengths and active lifetimes
//!   ([`temporal`]).
//! * P3, shared infrastructure: fan-out W1, clustering and triangle gaps of
//!   the entity projection ([`graph`]).
//! * P4, velocity rules: mean trigger-rate gap over the applicable rules
//!   ([`velocity`]).
//!
//! [`scoring::noise_floor`] computes the same metrics between two halves of
//! the real data; [`scoring::evaluate`] divides the synthetic values by them.
//! [`entity`] labels synthetic rows with pseudo-entities and [`oracle`]
//! provides the row-independent reference generator together with Monte
//! Carlo checks of its fan-out and spacing behavior.

pub mod entity;
pub mod error;
pub mod graph;
pub mod groundtruth;
pub mod ingest;
pub mod oracle;
pub mod scoring;
pub mod stats;
pub mod temporal;
pub mod velocity;

pub use error::{Error, Result};
pub use ingest::{load_synthetic, load_table, SchemaConfig, TransactionTable};
pub use scoring::{evaluate, noise_floor, BaselineScores, DegradationReport, EvalConfig};
