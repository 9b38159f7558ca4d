//! Adversarial imitation learning for discrete-time linear quadratic
//! regulators.
//!
//! The learner alternates a policy-gradient step on the gain `K` with a
//! projected ascent step on the cost parameter `θ = (Q, R)`. Around that
//! solver sit an exact LQR evaluator, a Riccati oracle, the stepsize
//! conditions with their constants, trace diagnostics and model-free
//! gradient estimators.

pub mod conditions;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod gail;
pub mod harness;
pub mod lqr;
pub mod numerics;
pub mod random;
pub mod riccati;

pub use error::{GailError, Result};
pub use lqr::{CostParam, LqrInstance, Policy};
pub use numerics::{Mat, NumericsConfig};
