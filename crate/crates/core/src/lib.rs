//! Finite-time energy-shaping controllers for bilateral teleoperation of
//! planar revolute manipulators, with a closed-loop simulator and a
//! homogeneity audit.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod controllers;
pub mod dynamics;
pub mod error;
pub mod homogeneity;
pub mod scalar_ops;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
