//! HSIC-regularized image de-biasing at desk scale.
//!
//! A small encoder-decoder (U-net) learns to reconstruct images so that a
//! frozen two-headed classifier's target predictions become statistically
//! independent of its protected-attribute predictions. Independence is
//! measured with the biased Hilbert-Schmidt independence criterion over
//! Gaussian RBF kernels, and the trade-off between reconstruction accuracy
//! and fairness is controlled by a single coefficient `lambda`:
//!
//! ```text
//! loss = mean((x - x̃)²) + lambda * HSIC(h1(x̃), h2(x̃))
//! ```
//!
//! Crate layout:
//!
//! * [`tensor`]: dense tensors and a reverse-mode tape with finite-difference checks.
//! * [`hsic`]: RBF Gram matrices, the HSIC estimator, its gradient and permutation tests.
//! * [`nets`]: the miniature U-net and classifier, plus checkpoint persistence.
//! * [`data`]: synthetic biased datasets and CelebA-style attribute/PGM ingestion.
//! * [`train`]: classifier pre-training and the HSIC-regularized de-biaser loop.
//! * [`metrics`]: AP, demographic parity, equality of opportunity and spillover analysis.

pub mod data;
mod error;
pub mod hsic;
pub mod metrics;
pub mod nets;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Real, Tape, Tensor, Var};
