//! Standardized Izhikevich (SIT) neurons and hybrid spiking networks.
//!
//! - [`neuron`]: discrete dynamics of LIF, QIF, vanilla Izhikevich and SIT
//!   neurons behind a name-keyed [`neuron::NeuronRegistry`].
//! - [`phase`]: nullclines, fixed points, eigenvalue stability and the
//!   standardization calculators.
//! - [`arch`]: the layer-string notation for network architectures.
//! - [`network`]: dense and spiking layers with backpropagation through time.

pub mod arch;
pub mod data;
pub mod error;
pub mod network;
pub mod neuron;
pub mod phase;
pub mod provenance;
pub mod real;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
