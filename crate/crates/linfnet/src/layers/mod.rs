//! Distance-neuron layers, networks, and bit-exact model files.

mod model_io;
mod network;
mod neuron;

pub use model_io::{deserialize_model, load_model, model_crc, save_model, serialize_model};
pub use network::{AffineHead, ConvDistLayer, DistLayer, HeadLayer, Layer, Network, Trace};
pub use neuron::{
    dist_neuron_forward, dist_neuron_grad, residual_unit_forward, NeuronMode,
};
