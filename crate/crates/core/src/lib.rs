//! Subject-aware contrastive self-supervised learning for multichannel
//! biosignals (EEG, ECG). Everything numeric is generic over [`Scalar`]
//! (`f32` or `f64`); the aliases below fix the precision.

pub mod augment;
pub mod contrast;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Recording32 = dataio::Recording<f32>;
pub type Recording64 = dataio::Recording<f64>;
pub type Segment32 = dataio::Segment<f32>;
pub type Segment64 = dataio::Segment<f64>;
pub type Encoder32 = nn::Encoder<f32>;
pub type Encoder64 = nn::Encoder<f64>;
pub type SslModel32 = contrast::SslModel<f32>;
pub type SslModel64 = contrast::SslModel<f64>;
pub type SslTrainer32 = train::SslTrainer<f32>;
pub type SslTrainer64 = train::SslTrainer<f64>;
