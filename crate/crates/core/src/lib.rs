//! Point-pair voting for category-level 9D object pose estimation.
//!
//! Every sampled oriented point pair predicts a handful of SE(3)-invariant
//! statistics (offsets to the object center, cosines to the object axes,
//! a log scale ratio and two flip bits). Each statistic constrains the pose
//! only up to a circle or a cone, so the pipeline enumerates candidates along
//! those loci, accumulates them in integer grids and takes the peaks. A
//! back-tracing pass keeps only the pairs that voted near the winning center
//! before orientation and scale are voted.
//!
//! The core is generic over the scalar type ([`Real`], implemented for `f32`
//! and `f64`); the crate root exposes `f64` aliases for everyday use.

pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod ppf;
pub mod predictor;
pub mod scalar;
pub mod scenegen;
pub mod spatial;
pub mod targets;
pub mod voting;

pub use error::{Error, Result};
pub use scalar::{Real, Vec3};

/// `f64` instantiations of the generic types.
pub type PointCloud = geometry::PointCloud<f64>;
pub type Pose9D = geometry::Pose9D<f64>;
pub type RigidTransform = geometry::RigidTransform<f64>;
pub type PointPair = ppf::PointPair<f64>;
pub type PairStatistics = targets::PairStatistics<f64>;
pub type AnchorCodec = targets::AnchorCodec<f64>;
pub type VotingConfig = voting::VotingConfig<f64>;
pub type Voter = voting::Voter<f64>;
pub type Detection = voting::Detection<f64>;
pub type Mesh = scenegen::Mesh<f64>;

/// `f32` instantiations, for memory-bound callers.
pub type PointCloud32 = geometry::PointCloud<f32>;
pub type Pose9D32 = geometry::Pose9D<f32>;
pub type Voter32 = voting::Voter<f32>;
