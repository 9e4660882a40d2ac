//! Nested multilevel Monte Carlo for the probability of a large portfolio
//! loss, with analytic and numerical smoothing of the loss indicator and
//! randomized quasi-Monte Carlo inner sampling.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod driver;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod model;
pub mod numkit;
pub mod oracle;
pub mod report;
pub mod smoothing;

pub use error::{Error, Result};
