//! Network specifications, parameter sets and checkpoints.

pub mod checkpoint;
pub mod network;
pub mod spec;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use network::{ForwardCache, Network, ParamGrads};
pub use spec::{
    build_alexnet, build_tranet, build_tranet_with, LayerKind, LayerSpec, NetworkSpec, PoolKind,
    ALEXNET_MIN_INPUT, TRANET_MIN_INPUT,
};
