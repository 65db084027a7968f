//! Hybrid offline-online reinforcement learning toolkit.
//!
//! Implements a family of hybrid actor-critic algorithms that mix a fixed
//! offline dataset with fresh on-policy interaction:
//!
//! - [`hpe`]: hybrid fitted policy evaluation (discounted, with iterate
//!   averaging) and its finite-horizon backward-recursion variant.
//! - [`hac`]: hybrid actor-critic with multiplicative softmax policy updates
//!   for finite action sets.
//! - [`hnpg`]: hybrid natural policy gradient for differentiable policies,
//!   including the practical finite-horizon variant with conjugate gradient,
//!   KL-constrained line search, and GAE advantages.
//! - [`comblock`]: the rich-observation continuous combination-lock benchmark
//!   plus its epsilon-greedy offline dataset generator.
//! - [`mdp`], [`oracle`], [`diagnostics`]: exact tabular machinery used as
//!   ground truth in tests and as distribution-shift diagnostics.
//! - [`harness`]: seeded experiment runner with JSONL metrics and a
//!   moving-average stopping rule.

pub mod comblock;
pub mod diagnostics;
pub mod env;
pub mod error;
pub mod func;
pub mod hac;
pub mod harness;
pub mod hnpg;
pub mod hpe;
pub mod mdp;
pub mod oracle;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};
pub use rng::Prng;
