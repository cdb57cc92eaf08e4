//! Kernel reconstruction for parallel-beam computed tomography.
//!
//! The unknown density lives in the RKHS of a Gaussian kernel on the unit
//! ball. Projections are modelled by the X-ray transform, the Gram matrix of
//! the backprojected generators is assembled in closed form, and the
//! reconstruction is the Tikhonov-regularized representer solution.

pub mod analysis;
pub mod data;
pub mod error;
pub mod fbp;
pub mod geometry;
pub mod gram;
pub mod kernels;
pub mod recon;
pub mod solve;
pub mod verify;

pub use error::{Error, Result};
