//! Restoration of blurred, Poisson-noisy grayscale images.
//!
//! The solver minimises an l2-lp regularised objective with a Poisson
//! log-likelihood fidelity term via an augmented Lagrangian splitting:
//! an exact FFT-diagonalised solve for the image, p-shrinkage for the
//! gradient splits, a closed-form positive root for the fidelity split,
//! and multiplier ascent. The TV and l2-l1 baselines are
//! parameterisations of the same loop (`mu = 0, p = 1` and `p = 1`).
//!
//! The crate also ships the degradation pipeline (blur + seeded Poisson
//! noise), PSNR/SNR/SSIM metrics, and a benchmark harness with bundled
//! presets; the `lprestore` binary exposes all of it on the command line.

pub mod bench;
pub mod degrade;
pub mod error;
pub mod img;
pub mod metrics;
pub mod ops;
pub mod solver;

pub use error::{Error, Result};
pub use img::ImageGrid;
pub use ops::{Psf, SpectralKernel};
pub use solver::{ConvergenceTrace, SolverConfig, SolverState};
