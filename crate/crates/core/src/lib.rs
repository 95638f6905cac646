//! Neural networks viewed as layered, directed, weighted graphs.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only pure numeric code:
//!
//! - [`netgraph`]: layer specifications, parameter storage and the lowered graph view
//! - [`forward`]: 64-bit forward pass producing pre-activations and activations
//! - [`metrics`]: link-weight statistics, node/neuron strength, activation,
//!   layer fluctuation and node disparity
//! - [`lowering`]: convolution patch coupling, Toeplitz reference matrix, recurrent unfolding
//! - [`theory`]: null distributions of untrained Gaussian networks and goodness-of-fit tests
//! - [`train`]: Gaussian initialization, backpropagation and minibatch SGD
//!
//! File formats, dataset parsers, reports and the command-line tool live in the
//! `cntnet` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod forward;
pub mod lowering;
pub mod metrics;
pub mod netgraph;
pub mod rng;
pub mod theory;
pub mod train;

pub use error::{Error, Result};
pub use forward::{activate, forward, ForwardTrace};
pub use metrics::{MetricKind, MetricSample, NodeStrength};
pub use netgraph::{
    ActivationKind, Edge, Layer, LayerKind, LayerParams, LayerSpec, LayeredGraph, Matrix,
    NetworkSpec, Violation,
};
pub use theory::{GofResult, NullDistribution, Verdict};
pub use train::{Dataset, LossKind, Population, Task, TrainConfig};
