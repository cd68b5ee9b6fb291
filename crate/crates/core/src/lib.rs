//! Metric scale recovery for relative monocular depth maps from UAV imagery.
//!
//! Sparse terrain points from a global elevation model are projected into
//! each frame, filtered by occlusion and a cloth-simulation ground mask, and
//! used as metric anchors for a closed-form scale/shift alignment of the
//! relative disparity. Baseline strategies and the evaluation harness live
//! alongside.

pub mod camera;
pub mod error;
pub mod eval;
pub mod gdem;
pub mod groundseg;
pub mod geodesy;
pub mod geom;
pub mod pfm;
pub mod pipeline;
pub mod projection;
pub mod raster;
pub mod scalar;
pub mod scaling;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

pub use camera::{Intrinsics, PointCloud, Pose};
pub use gdem::GdemCloud;
pub use groundseg::{CsfParams, SiteProfile};
pub use projection::{RangeMask, SparseGroundMap};
pub use raster::{DepthMap, DisparityMap, GroundMask, Raster};
pub use scaling::{RoughScaleParams, ScaleParams};

/// Single-precision variants.
pub type Intrinsics32 = camera::Intrinsics<f32>;
pub type Pose32 = camera::Pose<f32>;
pub type PointCloud32 = camera::PointCloud<f32>;
pub type DepthMap32 = raster::DepthMap<f32>;
pub type DisparityMap32 = raster::DisparityMap<f32>;
pub type GdemCloud32 = gdem::GdemCloud<f32>;
pub type SparseGroundMap32 = projection::SparseGroundMap<f32>;
pub type RangeMask32 = projection::RangeMask<f32>;
pub type ScaleParams32 = scaling::ScaleParams<f32>;
pub type RoughScaleParams32 = scaling::RoughScaleParams<f32>;
pub type CsfParams32 = groundseg::CsfParams<f32>;
