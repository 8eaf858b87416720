//! Multi-patch isogeometric multigrid for the Poisson problem in two and
//! three dimensions, with a rank-parallel vector layer.

pub mod error;
pub mod linalg;
pub mod spline;
pub mod topology;
pub mod assembly;
pub mod multigrid;
pub mod parallel;
pub mod smoother;
pub mod transfer;
pub mod harness;

pub use error::{Error, Result};
