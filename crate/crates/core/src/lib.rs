//! Riesz gradient flows, their mean-field limit on a grid, and the modulated
//! energy that measures the distance between the two.

// comparisons are negated on purpose so that NaN inputs fail validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod balls;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod meanfield;
pub mod modenergy;
pub mod quadrature;

pub use error::{Error, Result};
