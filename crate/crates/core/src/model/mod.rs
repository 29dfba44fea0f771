//! Bottleneck residual network engine: spec, parameters, forward/backward and checkpoints.

pub mod checkpoint;
pub mod network;
pub mod ops;
pub mod params;
pub mod spec;
pub mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use network::{feature_maps, Tape, TrainForward};
pub use params::{build_model, transfer_head, transfer_into, Bottleneck, ConvBn, Gradients, ModelParams, ParamKind};
pub use spec::{ModelSpec, StageSpec, StemSpec};
pub use tensor::{Activation, Scalar, Tensor};
