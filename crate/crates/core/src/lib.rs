//! Bayesian evaluation of systems from pairwise preference ratings.
//!
//! Human ratings are treated as draws from the true win/draw/loss
//! distribution of a system pair; automated-metric ratings are treated as the
//! same labels passed through a noisy confusion channel whose columns are
//! estimated from samples rated by both. [`decision::decide_pair`] turns that
//! evidence into a significance verdict and [`protocol::run_protocol`] spends
//! a human-annotation budget across all pairs until each is decided.

// `!(x > 0.0)` is used on purpose so NaN fails the check; 3x3 loops read
// better with explicit indices.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adapter;
pub mod analysis;
pub mod decision;
pub mod error;
pub mod io;
pub mod posterior;
pub mod protocol;
pub mod seed;
pub mod simulator;
pub mod types;

pub use error::{Error, Result};
pub use types::*;
