//! Threshold spectral analysis for H = -Delta + V on a uniform 3D grid.
//!
//! Zero-energy resonances and eigenvalues are detected through the
//! Birman-Schwinger family A(lambda) = U + v R0(lambda^2) v, inverted near
//! lambda = 0 by a two-level Jensen-Nenciu reduction, and their effect on
//! dispersive decay is measured by direct time evolution.

pub mod acceptance;
pub mod birman;
pub mod dispersive;
pub mod error;
pub mod fit;
pub mod grid;
pub mod inversion;
pub mod linalg;
pub mod oracle;
pub mod potential;
pub mod quad;
pub mod radial;
pub mod threshold;

pub use error::{Result, ScopeError};
pub use num_complex::Complex64 as C64;

/// Cap the worker pool shared by rayon and faer; `None` keeps the machine default.
/// Returns the number of workers in use.
pub fn configure_threads(cap: Option<usize>) -> usize {
    let n = cap.filter(|&n| n > 0).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    // a second call keeps the pool built by the first
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    let n = rayon::current_num_threads();
    faer::set_global_parallelism(if n > 1 { faer::Par::rayon(n) } else { faer::Par::Seq });
    n
}
