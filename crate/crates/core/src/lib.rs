//! Contour-based structure encoding toolkit for nuclei instance segmentation.
//!
//! The crate turns instance label maps into training targets (signed
//! structure encoding, HV, Dir and position maps), provides reference
//! forward passes for structure-guided attention, the segmentation losses
//! with analytic gradients, threshold-based post-processing back to
//! instances, and the Dice / AJI / Hausdorff / PQ metrics.
//!
//! Numeric code is generic over [`num_traits::Float`]; the aliases at the
//! crate root fix the scalar type for the common cases.

pub mod distance;
pub mod encodings;
pub mod error;
pub mod fixtures;
pub mod grid;
pub mod grid_core;
pub mod invariance;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod postproc;
pub mod selfcheck;
pub mod transform;

pub use error::{Error, Result};
pub use grid::{BinaryMask, DirMap, FeatureMap, Field, Grid, LabelMap, SemanticClass, SemanticMask};

/// Double-precision scalar field (encodings, predictions, losses).
pub type ScalarField = Field<f64>;
/// Single-precision scalar field, the SEF1 storage type.
pub type ScalarField32 = Field<f32>;
