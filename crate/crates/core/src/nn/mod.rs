//! Small dense-tensor network engine: stride-1 convolutions, max pooling,
//! dense layers, dropout, max-norm constraints and a sigmoid head trained
//! with binary cross-entropy.

mod layers;
mod network;
mod optim;
mod scalar;
mod spec;
mod tensor;
mod train;
mod weights_io;

pub(crate) use layers::{axpy, conv_from_cols, im2col, maxpool, ConvGeom, PoolGeom};
pub(crate) use network::Op;
pub use network::{init_params, named_tensors, Cache, LayerParams, NetInput, Network, ParamSet};
pub use optim::{apply_max_norm, max_norm_rows, AdamConfig, AdamState};
pub use scalar::{sigmoid, Scalar};
pub use spec::{Activation, LayerSpec, NetworkSpec, Padding, Shape};
pub use tensor::Tensor;
pub use train::{
    accuracy, bce_from_logit, fit, predict_batch, predict_refs, train_step, EpochMetrics, FitReport, Sample,
    TrainConfig,
};
pub use weights_io::{decode_weights, encode_weights, load_weights, save_weights};
