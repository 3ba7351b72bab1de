//! Stochastic gradient methods for `min f(w) + g(w)` with a smooth
//! non-convex loss `f` and a non-smooth non-convex separable penalty `g`.
//!
//! Both methods work on smooth majorants of `f + e_λg`, where `e_λg` is the
//! Moreau envelope of the penalty, so each step needs only a stochastic
//! gradient of `f` and one proximal evaluation of `g`:
//!
//! * [`optim::mbsga_run`]: mini-batch steps for general stochastic objectives.
//! * [`optim::vrsga_run`]: variance-reduced steps for finite sums.
//!
//! The concrete problem shipped here is binary classification with the
//! Lorenz loss ([`loss`]) and the log-sum penalty ([`regularizer`]).

pub mod data;
pub mod envelope;
mod error;
pub mod harness;
pub mod loss;
pub mod optim;
pub mod regularizer;

pub use data::{LabelRule, LibsvmOptions, SparseDataset, SparseRow};
pub use envelope::EnvelopeAnchor;
pub use error::{Error, Result};
pub use loss::{ErmObjective, LorenzLoss};
pub use regularizer::{LogSumRegularizer, ProxResult, Regularizer};
