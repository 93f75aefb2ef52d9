//! Constant solutions, multifractal spectra and anomalous dissipation for the
//! tree-indexed dyadic shell model with repeated coefficients.

// `!(x >= y)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coefficients;
pub mod dissipation;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod model;
pub mod numeric;
pub mod solution;
pub mod spectra;
pub mod tree;

pub use coefficients::{GeneralCoefficients, ModelParams, RepeatedCoefficients};
pub use error::{RcmError, Result};
pub use model::{ModelSpec, RcmModel};
pub use solution::{ConstantSolution, NormValue};
pub use tree::{cube_of, path_of_point, DyadicCube, TreeIndex};
