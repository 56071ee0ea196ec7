//! Guaranteed upper bounds on the additive-error nonlinearity measure (AE-NLM)
//! of an unknown Lipschitz input-output map.
//!
//! The crate is organised bottom-up:
//!
//! - [`space`]: amplitude-parameterised input sets, hyperrectangle cells and splitting.
//! - [`envelope`]: sample storage and the Lipschitz envelope around it.
//! - [`relaxation`]: pointwise upper bounds on the output deviation over a two-sample envelope.
//! - [`optimizer`]: certified maximisation of the pointwise bound over a cell.
//! - [`surrogate`]: causal LTI surrogate (lower-triangular Toeplitz) and its minimax fit.
//! - [`engine`]: the iterative branch-and-bound sampling loop.
//! - [`plant`]: simulated plants, noise injection and brute-force oracles.
//! - [`suites`]: soundness suites that compare the bounds against the oracles.

pub mod engine;
pub mod envelope;
mod error;
pub(crate) mod linalg;
pub mod optimizer;
pub mod plant;
pub mod relaxation;
pub mod space;
pub mod suites;
pub mod surrogate;

pub use envelope::{Dataset, NoiseModel, Sample};
pub use error::{Error, Result};
pub use optimizer::{OptimizerConfig, OptimizerMode};
pub use space::{Cell, InputBasis, SplitKind};
pub use surrogate::LinearSurrogate;
