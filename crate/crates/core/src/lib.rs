//! Sparse-view 3D Gaussian splatting with multi-view consistency.
//!
//! The crate is `no_std` + `alloc`. It holds the camera model, the Gaussian
//! field, a differentiable CPU rasterizer with an analytic backward pass, the
//! sparse midpoint initializer with voxel-excluded random filling, feature
//! guided progressive pruning, edge-aware depth regularization, the training
//! loop and a synthetic scene generator. File formats and the command line
//! live in the `mcgs` companion crate.
//!
//! The `std` feature (on by default) enables tile-parallel rendering through
//! rayon. Results are bit-identical with and without it.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod error;
pub mod filter;
pub mod gaussian;
pub mod geometry;
pub mod image;
pub mod initializer;
pub mod losses;
pub(crate) mod math;
pub mod metrics;
pub(crate) mod par;
pub mod pruning;
pub mod raster;
pub mod rng;
pub mod sh;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
pub use gaussian::GaussianField;
pub use geometry::{CameraView, Ray};
pub use image::Image;
pub use initializer::{CorrespondenceSet, Match, PointCloudSeed, PointSource};
pub use pruning::{FeatureMap, FeatureStack, PruneDecision};
pub use raster::{RenderOutput, Renderer, SplatGradients};
pub use synthetic::{ScenePreset, SceneSpec, SyntheticScene};
pub use trainer::{TrainConfig, TrainPreset, TrainState, Trainer};
