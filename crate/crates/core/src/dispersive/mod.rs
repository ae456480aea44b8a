//! Time evolution, decay measurement and the explicit t^{-1/2} kernels.

pub mod cutoff;
pub mod evolution;
pub mod kernel;
