//! Asymptotic spectral theory of spiked cross-covariance matrices `X^T Y`,
//! with a Monte Carlo simulator and PLS estimators to check it against.
//!
//! Layering, bottom-up: [`polys`] (the cubics and their roots), [`bulk`]
//! (noise spectrum and edge), [`outliers`] (detection and outlier
//! positions), [`overlaps`] (singular-vector alignment), [`linalg`]
//! (truncated SVD), [`sim`] (sampling and empirical measurements) and
//! [`pls`] (mode-A PLS and PLS-SVD).

pub mod bulk;
pub mod error;
pub mod linalg;
pub mod outliers;
pub mod overlaps;
pub mod pls;
pub mod polys;
pub mod sim;

pub use bulk::BulkLaw;
pub use error::{Error, Result};
pub use outliers::{Branch, OutlierPrediction};
pub use overlaps::{OverlapPrediction, RotationPlan};
pub use polys::{AspectRatios, CubicCoeffs, Spike};
