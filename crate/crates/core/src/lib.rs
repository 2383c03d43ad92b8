//! Series expansions, passage-time pole orders and structural checks for
//! singularly perturbed Markov chains built from reaction networks.

pub mod cli;
pub mod comparison;
pub mod error;
pub mod generator;
pub mod graph;
pub mod linalg;
pub mod mfpt;
pub mod oracle;
pub mod pole_order;
pub mod scrn_model;
pub mod stationary_expansion;

pub use error::{Error, Result};
pub use generator::{assemble_generator, block_decompose, classify_states, verify_assumptions, Blocks, PerturbedGenerator};
pub use linalg::Tolerances;
pub use scrn_model::{build_chromatin_model, ChromatinModel, ChromatinParams, ModelKind, ReactionNetwork, StateSpace};
