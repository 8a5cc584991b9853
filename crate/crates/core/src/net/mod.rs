//! Small fully-convolutional saliency network and its SGD trainer.
//!
//! The network maps a C-channel image to a single-channel response map at
//! reduced resolution. Training applies softmax to the response and scores
//! it against the area-downsampled ground truth with one of the distribution
//! losses; inference upsamples the response bilinearly to image size before
//! the softmax.

mod layers;
mod model;
mod tensor;
mod train;

pub use model::{
    ConvParams, ConvSpec, FcnModel, Gradients, Init, Layer, LayerSpec, Trace, HEAD_LR_MULTIPLIER, INIT_SIGMA,
    TRUNK_LR_MULTIPLIER,
};
pub use tensor::Tensor;
pub use train::{
    gradient_check, predict, sgd_step, train, validate, EpochRecord, IterationRecord, LayerCheck, GRADIENT_CHECK_FLOOR, TrainConfig,
    TrainLog, Validation,
};
