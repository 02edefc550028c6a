//! Fiber-based analysis of semilinear Dirichlet problems `-Δu - f(u) = g`.

// `!(x < y)` is deliberate throughout: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod asymptotics;
pub mod config;
pub mod contraction;
pub mod error;
pub mod fiber;
pub mod nonlinearity;
pub mod oracle;
pub mod problem;
pub mod spectral;

pub use error::{Error, Result};
pub use nonlinearity::{Nonlinearity, NonlinearitySpec};
pub use spectral::{BoxDomain, Field, GridField, SpectralBasis};
