//! Noncommutative Calderon-Zygmund constructions on finite dyadic grids with
//! matrix-valued step functions.

pub mod cli;
pub mod czdecomp;
pub mod dyadic;
pub mod error;
pub mod experiments;
pub mod funcspace;
pub mod kernels;
pub mod martingale;
pub mod matalg;
pub mod random;
pub mod sio;

pub use error::{Error, Result};
