//! Music genre classification from raw audio waveforms.
//!
//! This crate implements the full pipeline for training and evaluating 1D
//! convolutional networks directly on audio samples, with no spectrogram
//! front end:
//!
//! * [`tensor`]: a small reverse-mode autodiff engine over dense tensors
//!   of rank 1 to 3, with the layer vocabulary needed by the model zoo
//!   (1D convolution, pooling, batch normalization, dense, dropout,
//!   activations, cross-entropy) and an Adam optimizer.
//! * [`models`]: six raw-waveform architectures built from a shared layer
//!   description, with exact parameter counting and shape tracing.
//! * [`audio`]: WAV ingestion, windowed-sinc resampling, segmentation,
//!   integrated loudness measurement, and the five waveform augmentations
//!   (noise, gain, loudness normalization, pitch shift, time stretch).
//! * [`train`]: the 3-fold cross-validation protocol (stratified folds,
//!   mini-batch training with early stopping, segment-to-track aggregation
//!   by majority vote or sum rule, and metric export).
//! * [`persist`]: binary checkpoints and JSON-lines dataset manifests.
//! * [`synth`]: deterministic synthetic corpora for tests and demos.
//!
//! All core math is generic over the scalar type through [`Scalar`]; `f32`
//! is the production dtype and `f64` exists for high-precision gradient
//! verification. Concrete aliases are exported at the crate root.

pub mod audio;
pub mod models;
pub mod persist;
pub mod seeds;
pub mod synth;
pub mod tensor;
pub mod train;

mod scalar;

pub use scalar::Scalar;
pub use tensor::{Tape, Tensor, TensorError};

/// Working sample rate of the whole pipeline, in Hz. Every clip is
/// resampled to this rate before segmentation, and filter front ends are
/// designed against it.
pub const SAMPLE_RATE: u32 = 22_050;

/// Production-precision tensor.
pub type Tensor32 = Tensor<f32>;
/// High-precision tensor for gradient verification.
pub type Tensor64 = Tensor<f64>;
/// Production-precision computation tape.
pub type Tape32 = Tape<f32>;
/// High-precision computation tape.
pub type Tape64 = Tape<f64>;
