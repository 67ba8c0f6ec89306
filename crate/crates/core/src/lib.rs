// Negated float comparisons are deliberate: they make NaN fail validation.
// Indexed loops mirror the coefficient formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bands;
pub mod checks;
pub mod collisions;
pub mod config;
pub mod driver;
pub mod basis;
pub mod error;
pub mod mesh;
pub mod moments;
pub mod output;
pub mod par;
pub mod poisson;
pub mod quadrature;
pub mod scaling;
pub mod transport;

pub use error::{Error, Result};
