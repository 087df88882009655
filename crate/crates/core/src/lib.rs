//! Forward simulation and regularized D-bar reconstruction for 2D electrical
//! impedance tomography, plus the dataset tooling that feeds a learned
//! post-processor.

pub mod dbar;
pub mod electrode;
pub mod error;
pub mod fem;
pub mod gmres;
pub mod image;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod scattering;

pub use error::{EitError, Result};
