//! Query-efficient search for ordered in-context exemplar sequences.
//!
//! A neural-bandit surrogate over sequence embeddings proposes which sequence
//! to evaluate next; candidates are pre-filtered by their optimal-transport
//! distance to the validation set. Simulated oracles and synthetic task
//! generators make the whole loop runnable offline.

pub mod domain;
pub mod embed;
pub mod error;
pub mod evaluate;
pub mod harness;
pub mod http;
pub mod rng;
pub mod optimizer;
pub mod otfilter;
pub mod surrogate;
pub mod taskgen;

pub use domain::{
    best_observation, mean_score, Exemplar, ExemplarPool, ExemplarSequence, History,
    InstructionSet, Observation, ValidationSet,
};
pub use error::{Error, Result};
