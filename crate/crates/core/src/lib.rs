//! Block-permuted diagonal (BPD) neural-network layers.
//!
//! A BPD weight matrix is tiled by `p x p` blocks, each holding its nonzeros
//! on one cyclically shifted diagonal. Storage and multiply count both shrink
//! by `p`, and every row and column of a block carries exactly one weight.
//!
//! The crate covers the representation ([`BpdMatrix`], [`BpdConvTensor`]),
//! forward products, projection from dense weights, storage accounting,
//! structure-preserving training ([`train`]), and the 16-bit fixed-point and
//! weight-sharing formats used by the hardware model ([`quant`]).
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix the common choices.

pub mod activation;
pub mod conv;
pub mod data;
pub mod error;
pub mod matrix;
pub mod project;
pub mod quant;
pub mod scalar;
pub mod stats;
pub mod train;

pub use activation::Activation;
pub use conv::BpdConvTensor;
pub use data::Dataset;
pub use error::{BpdError, Result};
pub use matrix::{BpdMatrix, InitPolicy, PermPolicy};
pub use project::{
    mask_matrix, mask_tensor, project_matrix, project_tensor, MatrixProjection, Projection,
    ProjectionNorm, TensorProjection,
};
pub use quant::{build_codebook, build_matrix_codebook, fixed_matvec, Codebook, FixedPointSpec};
pub use scalar::Scalar;
pub use stats::{compression_stats, CompressionStats, LayerShape};
pub use train::{
    convert_pretrained, evaluate, grad_conv, ConvLayer, FcLayer, Layer, grad_fc, sgd_update, train_epoch, EpochMetrics,
    LayerGradients, Loss, Model, TrainConfig,
};

pub type BpdMatrixF32 = BpdMatrix<f32>;
pub type BpdMatrixF64 = BpdMatrix<f64>;
pub type BpdConvTensorF32 = BpdConvTensor<f32>;
pub type BpdConvTensorF64 = BpdConvTensor<f64>;
pub type ModelF32 = Model<f32>;
pub type ModelF64 = Model<f64>;
