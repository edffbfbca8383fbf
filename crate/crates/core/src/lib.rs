//! Mean-field variational inference: coordinate ascent (CAVI) under parallel and
//! sequential schedules, four closed-form model families, ELBO-based model
//! selection with its asymptotic gap constants and contraction rates, and a
//! Monte Carlo evidence oracle.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod evidence;
pub mod factors;
pub mod linalg;
pub mod models;
pub mod par;
pub mod selection;
pub mod special;

pub use error::{Error, Result};
