//! Network description and forward evaluation.

mod forward;
mod model;

pub use forward::{
    avg_pool_2d, concat_channels, forward_conv2d, forward_fully_connected, forward_network,
    forward_softmax, lrn_across_channels, max_pool_2d, relu,
};
pub(crate) use forward::run_network;
pub use model::{
    ConvParams, FcParams, InputRef, LayerGroup, LrnParams, NetworkModel, PoolParams, Stage,
    StageKind, WeightStore, INPUT_NAME,
};
