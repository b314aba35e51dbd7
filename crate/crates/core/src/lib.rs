//! Exact ReLU representation of smooth decision surfaces by a sequence of
//! local projections.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod construction;
pub mod error;
pub mod geometry;
pub mod layers;
pub mod linalg;
pub mod network;
pub mod rng;
pub mod surfaces;
pub mod weights;

pub use error::{Error, Result};
