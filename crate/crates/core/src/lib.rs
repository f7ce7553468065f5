//! Barrier-regularized online Newton steps (BARONS) for online convex
//! optimization over polytopes.
//!
//! The online learner tracks the follow-the-regularized-leader iterates of a
//! self-concordant barrier with a few approximate Newton steps per round,
//! reusing one Hessian factorization until the iterate drifts too far from
//! the point where it was computed.

// `!(x > 0)` style guards are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barons;
pub mod barrier;
pub mod baselines;
pub mod checks;
pub mod domain;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod losses;
pub mod newton;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type Polytope64 = domain::Polytope<f64>;
pub type Polytope32 = domain::Polytope<f32>;
pub type LogBarrier64 = barrier::LogBarrier<f64>;
pub type LogBarrier32 = barrier::LogBarrier<f32>;
pub type BaronsParams64 = barons::BaronsParams<f64>;
pub type BaronsParams32 = barons::BaronsParams<f32>;
