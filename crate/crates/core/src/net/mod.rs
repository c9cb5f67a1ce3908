//! Golden software model of the approximate LBP network.
//!
//! Everything here is plain integer arithmetic over [`FeatureMap`]s. The
//! hardware simulator in [`crate::pipeline`] is checked bit-for-bit against
//! these functions.

mod cost;
mod fmap;
mod head;
mod kernel;
mod layer;
mod spec;

pub use cost::{
    count_ops_aplbp, count_ops_lbpnet, cost_ratios, op_count_for_layer, CostRatios, OpCount,
};
pub use fmap::FeatureMap;
pub use head::{avg_pool, batch_norm, head_forward, mlp_forward, quantize_activation, BatchNorm, MlpLayer};
pub use kernel::{apply_pac, lbp_encode, ApproxConfig, LbpKernel, ProjectionEntry, ProjectionMap, Tap};
pub use layer::{
    compute_padding, lbp_layer_forward, lbp_layer_forward_counted, shifted_relu, LbpLayer, LbpOutput,
};
pub use spec::{forward, Activation, InputGeometry, LayerSpec, NetworkSpec, Shape, FORMAT_VERSION};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("padding numerator {0} is negative")]
    NegativePadding(i64),
    #[error("padding numerator {0} is odd")]
    NonIntegerPadding(i64),
    #[error("apx={apx} out of range (max {max})")]
    ApxOutOfRange { apx: u32, max: u32 },
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid projection map: {0}")]
    InvalidProjection(String),
    #[error("invalid feature map: {0}")]
    InvalidFeatureMap(String),
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("unsupported format_version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("arithmetic overflow in {0}")]
    Overflow(&'static str),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NetError> = std::result::Result<T, E>;
