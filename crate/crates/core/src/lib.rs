//! Planning under uncertainty to goal distributions.
//!
//! Gaussian state beliefs are pushed through stochastic nonlinear dynamics
//! with a single-parameter unscented transform; action sequences are
//! optimized with the cross-entropy method to minimize the KL divergence
//! between predicted beliefs and a goal distribution; plans execute in a
//! receding-horizon loop.

pub mod cem;
pub mod distributions;
pub mod envs;
pub mod error;
pub mod linalg;
pub mod mpc;
pub mod oracles;
pub mod scenario;
pub mod seeding;
pub mod trajectory;
pub mod unscented;

pub use error::{Error, Result};
