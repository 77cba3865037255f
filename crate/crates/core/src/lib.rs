//! Optimization over trained feedforward network surrogates.
//!
//! Networks with ReLU or swish hidden layers are compiled into a big-M mixed-integer
//! model, a complementarity-constrained model, or used directly inside a smooth
//! solver. The crate ships its own dense simplex, branch-and-bound, Frank-Wolfe and
//! pattern-search solvers, plus activation-region geometry and stationarity checks.

// `!(a <= b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod encode;
pub mod error;
pub mod io;
pub mod model;
pub mod nn;
pub mod problems;
pub mod regions;
pub mod solve;
pub mod stationarity;

pub use error::{Error, Result};
pub use nn::{
    Activation, ActivationPattern, AffineMap, Layer, Network, NeuronId, SignPartition,
    DEFAULT_DEGENERACY_TOL,
};
