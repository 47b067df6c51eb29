//! Minimal differentiable numerics: channel-major 1-D sequences, the handful
//! of layers the network needs, a gradient tape over exactly those layers and
//! the Adam update rule. Everything is `f64`.

mod adam;
pub(crate) mod kernels;
mod ops;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, adam_step_filtered, AdamConfig, AdamState};
pub use ops::{
    add, conv1x1, dilated_conv1d, relu, softmax_channels, KernelWeights, PointwiseWeights,
};
pub use params::{Gradients, Param, ParamId, ParamStore};
pub use tape::{NodeId, Tape};
pub use tensor::{ChannelSequence, ProbabilitySequence, PROBABILITY_TOLERANCE};
