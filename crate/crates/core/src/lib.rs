//! Sparse user × service × time QoS tensor completion.
//!
//! The model is a rank-R nonnegative CP factorization with per-entity linear
//! biases. Training minimizes a Cauchy (or plain squared) loss over the
//! observed entries with an ADMM scheme: every latent variable gets an
//! unconstrained auxiliary copy that is solved in closed form, the copies are
//! projected back onto the nonnegative orthant, and the multipliers take a
//! dual ascent step.

#[cfg(test)]
extern crate self as lft_core;

pub mod admm;
pub mod error;
pub mod eval;
pub mod io;
pub mod loss;
pub mod model;
pub mod tensor;

pub use admm::{train, AdmmState, AugmentationConstants, TrainConfig, TrainOutcome};
pub use error::{Error, Result};
pub use eval::{mae, split, EvalReport, SplitSpec};
pub use loss::Loss;
pub use model::FactorModel;
pub use tensor::{Dims, Entry, Mode, SparseTensor};
