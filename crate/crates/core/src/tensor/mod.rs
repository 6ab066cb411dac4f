//! Charge-graded block-sparse tensors.

mod block;
mod contract;
mod factor;
pub mod io;
mod matrix;
mod space;

pub use block::{BlockKey, BlockTensor, C64, DENSE_LEAK_TOL};
pub use contract::{contract, trace};
pub use factor::{
    diag_values, expm_operator, identity_operator, lq_positive, operator_spaces, qr_positive, random_skew, random_unitary,
    reconstruct, svd_truncated, SvdBlock, SvdFactors, TruncationPolicy,
};
pub use matrix::{has_allowed_blocks, BlockMatrix, FusedSpace};
pub use space::{Charge, ChargeGroup, Direction, IndexSpace};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("charge {charge} is not valid for group {group:?}")]
    InvalidCharge { charge: Charge, group: ChargeGroup },
    #[error("invalid index space: {0}")]
    InvalidSpace(String),
    #[error("structure error: {0}")]
    Structure(String),
    #[error("block {key:?} violates charge conservation")]
    ChargeViolation { key: BlockKey },
    #[error("dense array has weight {magnitude:e} outside the allowed blocks")]
    DenseLeak { magnitude: f64 },
    #[error("paired indices {pair:?} are not dual")]
    SpaceMismatch { pair: (usize, usize) },
    #[error("index pair {pair:?} out of range")]
    PairOutOfRange { pair: (usize, usize) },
    #[error("linear algebra failure: {0}")]
    Linalg(String),
    #[error("truncation would discard every singular value")]
    EmptyTruncation,
    #[error("discarded weight {discarded:e} exceeds budget {budget:e}")]
    TruncationBudget { discarded: f64, budget: f64 },
    #[error("invalid truncation policy: {0}")]
    InvalidPolicy(String),
    #[error("serialization: {0}")]
    Format(String),
}
