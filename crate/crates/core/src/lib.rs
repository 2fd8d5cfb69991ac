//! Structured pruning by neuron importance score propagation.
//!
//! The crate ranks the neurons of a network's final response layer, carries
//! those scores backward through every layer in a single pass, selects the
//! neurons/channels to keep, and cuts them out of the network. It also
//! carries the analysis tooling used to check the method: the Lipschitz
//! upper bound on the pruning objective, weighted reconstruction error,
//! FLOP/parameter accounting and PCA energy, plus a small dense trainer for
//! fine-tuning experiments.
//!
//! Everything here is pure computation on `alloc` collections; file formats
//! and the command-line driver live in the `nisp` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

mod error;
mod math;

pub mod analysis;
pub mod engine;
pub mod linalg;
pub mod matrix;
pub mod model;
pub mod propagation;
pub mod ranking;
pub mod surgery;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use model::{
    Activation, ActivationLayer, BatchNorm, Conv2d, Dense, Geometry, Kernel, Layer, LayerKind,
    Lrn, Network, NetworkDef, Pool2d, PoolMode, Shape, Space, SubNetwork, ValidationReport,
    Violation,
};
pub use engine::{ActivationTrace, ResponseMatrix, Sample};
pub use propagation::{ImportancePlan, PlanEntry, PruneConfig, PruneIndicator};
pub use ranking::{AffinityGraph, ImportanceVector};
