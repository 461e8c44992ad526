//! Non-adaptive learning of random uniform hypergraphs with edge-detecting
//! queries by hierarchical splitting.
//!
//! The pipeline is [`hypergraph`] (sample an unknown hypergraph) →
//! [`testdesign`] (fix all tests in advance) → [`oracle`] (observe pooled
//! outcomes) → [`decoder`] (recover the edges). [`typicality`] and
//! [`bounds`] check the structural and concentration properties the scheme
//! relies on; [`harness`] runs seeded experiments and sweeps.

pub mod bounds;
pub mod combin;
pub mod decoder;
pub mod error;
pub mod harness;
pub mod hypergraph;
pub mod oracle;
pub mod testdesign;
pub mod typicality;

pub use decoder::{comp_decode, decode, decode_with, DecodeOptions, DecodeResult, PdSet};
pub use error::{Error, Result};
pub use harness::{run_experiment, sweep, verify_against_comp, ExperimentConfig, ExperimentReport, ModelSpec};
pub use hypergraph::{Hypergraph, ModelParams, Sparsity};
pub use oracle::{evaluate_outcomes, materialize_test, OutcomeTable};
pub use testdesign::{derive_params, DesignConstants, DesignParams, SliceId, Storage, TestDesign};
pub use typicality::{check_typicality, compute_level_stats, LevelStats, TypicalityReport};
