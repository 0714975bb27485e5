//! Calibrate-simulate-solve toolkit for the state-dependent Fokker-Planck
//! description of bid/ask queue dynamics at the best quotes of large-tick
//! assets.
//!
//! The pipeline: parse best-quote event streams ([`events`]), normalize out
//! intraday seasonality ([`seasonality`]), estimate drift/diffusion and
//! price-jump quantities on rescaled volumes ([`calib1d`], [`calib2d`]),
//! decompose the 2D drift field into potentials ([`helmholtz`]), solve the
//! stationary equations ([`fpsolve`]), and run jump-diffusion Monte Carlo
//! for first-passage questions ([`simulate`]). [`synth`] generates event
//! streams from a known model, which is how the estimators are tested.

// the numerical kernels iterate several arrays by index; iterator-zip
// rewrites obscure the stencil structure
#![allow(clippy::needless_range_loop)]
#![allow(clippy::manual_is_multiple_of)]

pub mod calib1d;
pub mod calib2d;
pub mod error;
pub mod events;
pub mod fpsolve;
pub mod grid;
pub mod helmholtz;
pub mod model;
pub mod numerics;
pub mod plot;
pub mod seasonality;
pub mod simulate;
pub mod stats;
pub mod synth;

pub use error::CoreError;
pub use grid::{Grid1D, Grid2D};

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, CoreError>;
