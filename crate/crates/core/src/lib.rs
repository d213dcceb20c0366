//! Compositional ReLU networks.
//!
//! Width-4 deep ReLU networks whose weights are synthesized from triangle-peak and scale
//! parameters, so that a depth-`L` network outputs `2^L` linear segments. The crate contains:
//!
//! - [`pwl`]: exact continuous piecewise-linear functions on `[0, 1]`, the oracle for
//!   everything else;
//! - [`manifold`]: peak/scale coordinates, the scale recurrence, and numerical diagnostics
//!   of the resulting function family;
//! - [`nn`]: a small dense ReLU network with exact gradients, ADAM, baseline initializers,
//!   compositional weight synthesis and exact linear-region extraction;
//! - [`trainer`]: targets, datasets, and the two-stage (manifold, then raw weights) training
//!   pipeline alongside the baseline regimes;
//! - [`bench`] and [`verify`]: the experiment harness and the invariant suites behind the CLI.

pub mod bench;
pub mod dual;
pub mod manifold;
pub mod nn;
pub mod pwl;
pub mod trainer;
pub mod verify;

pub use manifold::{ManifoldParams, Mode};
pub use nn::DenseNet;
pub use pwl::PwlFunction;
