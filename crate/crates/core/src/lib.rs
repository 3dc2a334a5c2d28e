//! Meshless RBF-FD discretisation of advection-dominated transport problems,
//! stabilised by a hyperviscosity term whose strength is tuned from the
//! spectral radius of the implicit Euler evolution matrix.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: scattered node sets on the periodic unit torus and the unit
//!   square, and k-nearest-neighbour stencils.
//! - [`local_approx`]: polyharmonic spline + monomial local systems and the
//!   resulting RBF-FD weights.
//! - [`operators`]: global sparse differentiation matrices, the stabilised
//!   operator and Dirichlet row/column replacement.
//! - [`spectral`]: the factorised evolution map `(I - dt*D)^-1` and restarted
//!   Arnoldi / dense estimates of its spectral radius.
//! - [`tuner`]: sweep + log-scale bisection for the smallest stabilising
//!   hyperviscosity constant.
//! - [`timestepping`]: backward Euler drivers for linear advection and the
//!   linearised Burgers' equation.
//! - [`metrics`]: relative error / energy and convergence-order fits.
//!
//! With the default `parallel` feature, per-node work (stencil search, weight
//! computation) and batch evaluation run on the rayon pool; every parallel
//! path has a sequential twin selected through [`Execution`].

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod exec;
pub mod geometry;
pub mod local_approx;
pub mod metrics;
pub mod operators;
pub mod spectral;
pub mod textio;
pub mod timestepping;
pub mod tuner;

pub use error::{Error, Result};
pub use exec::Execution;
pub use geometry::{find_stencils, generate_nodes, Domain, Metric, NodeSet, StencilTable};
pub use local_approx::{compute_weights, OperatorKind, OperatorSpec};
pub use operators::{assemble, stabilised_operator, HyperviscosityConfig, SparseOperator};
pub use spectral::{
    build_evolution, spectral_radius, EvolutionMap, SpectralConfig, StabilityReport,
};
pub use tuner::{find_c_opt, TuneResult, TuneStatus, TunerConfig};
