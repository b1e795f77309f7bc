//! Event-pattern quantum dynamics.
//!
//! Histories are growing directed graphs of events joined by causal links.
//! Each link carries a finite-dimensional Hilbert space; events emit vectors
//! on their outgoing links and absorb incoming links through rank-1
//! operators. Probabilities for extending a history come from the cut state,
//! the tensor product of what the unsaturated past events still leave open.
//!
//! Besides the dynamics the crate carries three numerical studies: the EPR
//! spin scenario with its CHSH comparison against per-link hidden states,
//! the ambiguity between a thermal momentum ensemble and a mixture of
//! Gaussian packets, and the cell decomposition of a quasilocal scattering
//! operator together with the momentum-balance spread it implies.

pub mod ensemble;
pub mod epr;
pub mod graph;
pub mod dynamics;
pub mod quasilocal;
pub mod rng;
pub mod tensor;

pub use dynamics::{
    alternative_probabilities, chain_rule_defect, cut_state, event_probability, joint_probability, realize,
    realize_alternative, sample_extension, Alternative, AlternativeSet, CandidateEvent, CutState, DynamicsError,
    ExtensionSampler,
};
pub use epr::{Direction, EprSetup, Outcome};
pub use graph::{Cut, EventId, EventRecord, GraphError, History, LinkId, LinkRecord, Region};
pub use num_complex::Complex64;
pub use tensor::{EventOperator, FactorLabel, LabeledVector, ProductBra, SpaceType, TensorError};

/// Absolute tolerance for unit-norm checks on bras and vectors handled by the
/// tensor layer.
pub const UNIT_TOL: f64 = 1e-12;
