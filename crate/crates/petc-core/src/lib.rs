//! Design toolkit and discrete-event simulator for distributed periodic
//! event-triggered control over packet networks with asynchronous sampling
//! and bounded delays.
//!
//! The crate splits into: per-agent timing design ([`design`]), the hybrid
//! state with its flow and jump maps ([`hybrid`]), the pluggable system
//! model with a single-integrator consensus instance ([`model`],
//! [`consensus`]), the seeded discrete-event engine ([`sim`]), and the
//! runtime certificate monitor ([`verify`]).

// Validation guards are written as negated comparisons so NaN inputs fail
// them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod consensus;
pub mod design;
pub mod error;
pub mod graph;
pub mod hybrid;
pub mod model;
pub mod sim;
pub mod trace;
pub mod verify;

pub use config::{consensus_eight_config, ScenarioConfig};
pub use error::{Error, Result};
pub use graph::GraphTopology;
pub use hybrid::HybridState;
pub use model::SystemModel;
pub use trace::SimTrace;
