//! Separated-variables tensor regression for high-dimensional problems with
//! scarce data.
//!
//! The central object is the [`MTensor`]: a stack of `m` rank-1 tensors stored as
//! `n` core matrices that share their row count. Least-squares problems posed on
//! such a design tensor are solved in the dual, through the Gram matrix
//! `P = Φ ⋉ Φᵀ`, which is the Hadamard product of per-core Gram matrices. No
//! operation on the fast path ever touches the `Π p_j` dense coefficients.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). The experiment
//! drivers are concrete in `f64`.

// `!(x > 0)` is the NaN-rejecting form used throughout for argument checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ali;
pub mod dense;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod features;
pub mod io;
pub mod linalg;
pub mod mtensor;
pub mod regression;
pub mod scalar;
pub mod selftest;

pub use ali::{AliDecomposition, AliMode, AliOptions};
pub use error::{Error, Result};
pub use features::{Basis1D, FeatureMapSet, ScaleMode};
pub use linalg::CholeskyFactor;
pub use mtensor::{contract_general, DenseTensor, MTensor, Rank1Row, DEFAULT_DENSE_CAP};
pub use regression::{RegressionModel, Regularizer};
pub use scalar::Scalar;

pub type MTensorF64 = MTensor<f64>;
pub type MTensorF32 = MTensor<f32>;
pub type Rank1RowF64 = Rank1Row<f64>;
pub type DenseTensorF64 = DenseTensor<f64>;
pub type CholeskyFactorF64 = CholeskyFactor<f64>;
pub type CholeskyFactorF32 = CholeskyFactor<f32>;
pub type FeatureMapSetF64 = FeatureMapSet<f64>;
pub type RegressionModelF64 = RegressionModel<f64>;
pub type RegressionModelF32 = RegressionModel<f32>;
