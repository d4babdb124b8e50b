//! Entropy-regularized linear-quadratic mean field games: closed-form
//! equilibria, Euler–Maruyama simulation of the discretized game, and a
//! policy-gradient learner driven by zeroth-order gradient estimates.

pub mod analytic;
pub mod error;
pub mod harness;
pub mod learner;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use rng::Substream;
