//! Fairness-aware multi-view evidential learning.
//!
//! View-specific networks emit non-negative evidence that parameterizes a
//! Dirichlet through a training-trajectory prior; per-view opinions are fused
//! by confidence-weighted evidence aggregation and trained with a
//! class-balanced objective that adds a class-wise evidence-variance penalty
//! and a cross-view variance-alignment term.

pub mod cli;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod net;
pub mod numerics;
pub mod opinion;
pub mod prior;
pub mod seed;
pub mod trainer;

pub use error::{DataError, FamlError, Result};
pub use opinion::{
    aggregate_weighted, dirichlet_from_evidence, dirichlet_variance, dissonance, fairness_degree,
    opinion_from_dirichlet, project, DirichletParams, EvidenceVector, Opinion, PriorVector,
    ProbabilityVector,
};
