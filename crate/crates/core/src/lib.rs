//! Vision-based tactile sensing from a dense random color pattern.
//!
//! The crate covers the whole chain: generating the printed pattern,
//! simulating indentations of the gel, tracking the image deformation with
//! dense optical flow, estimating contact depth from the Gaussian density of
//! the displaced pixels, and turning the flow into a force distribution with
//! a Helmholtz–Hodge decomposition and a calibrated linear model.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod depth;
pub mod error;
pub mod flow;
pub mod force;
pub mod io;
pub mod pattern;
pub mod pipeline;
pub mod raster;
pub mod simulator;

pub use error::{Error, Result};
