//! Density ridge estimation by subspace constrained mean shift (SCMS), with
//! bandwidth selection by minimizing an estimated coverage risk.
//!
//! The crate is organised around a handful of modules:
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`kde`] | Gaussian kernel density estimator with analytic gradient and Hessian |
//! | [`scms`] | Ridge extraction by subspace constrained mean shift |
//! | [`coverage`] | Projection distances, coverage diagrams, L1/L2 losses, Hausdorff distance |
//! | [`risk`] | Coverage-risk estimates (data splitting, smoothed bootstrap) and bandwidth selection |
//! | [`datasets`] | Synthetic generators with ground truth, CSV ingestion |
//! | [`cli`] | The `ridgecov` command-line front end |
//!
//! ```
//! use ridgecov::datasets::{generate, Shape, SyntheticSpec};
//! use ridgecov::scms::{extract_ridge, ScmsConfig};
//! use ridgecov::coverage::hausdorff;
//!
//! let spec = SyntheticSpec::new(Shape::NoisyCircle { radius: 2.0 }, 300, 0.2, 1);
//! let (cloud, truth) = generate(&spec).unwrap();
//! let ridge = extract_ridge(&cloud, 0.3, &ScmsConfig::default()).unwrap();
//! let haus = hausdorff(&ridge.to_manifold().unwrap(), &truth).unwrap();
//! assert!(haus < 0.5);
//! ```

pub mod cli;
pub mod coverage;
pub mod datasets;
mod error;
pub mod io;
pub mod kde;
pub mod risk;
pub mod scms;
mod spatial;

pub use error::{Error, Result};
pub use kde::{KernelModel, PointCloud};
