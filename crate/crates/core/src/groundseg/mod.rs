//! Ground segmentation of a single frame from its relative disparity.
//!
//! The disparity is first turned into a rough depth with fixed parameters.
//! Its scale is unknown, so the CSF lengths are rescaled per frame by the
//! ratio `cf` between the expected and the rough central-row distance.

pub mod csf;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use csf::{csf_classify, Cloth, CsfParams};

use crate::camera::{back_project, Intrinsics, Pose};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::raster::{valid_depth, DepthMap, DisparityMap, GroundMask, Raster};
use crate::scalar::{median, Real};
use crate::scaling::{fixed_scale_apply, RoughScaleParams};

/// Half-height of the central row band used for `cf`.
pub const CENTRAL_HALF_BAND: usize = 17;

/// `1 / (s̄·d + t̄)`, invalid where the denominator is not positive.
pub fn rough_scale<T: Real>(disp: &DisparityMap<T>, params: &RoughScaleParams<T>) -> Result<DepthMap<T>> {
    fixed_scale_apply(disp, params)
}

/// Rows `⌊H/2⌋ − 17 ..= ⌊H/2⌋ + 17`, clipped to the image.
pub fn central_rows(height: usize) -> std::ops::Range<usize> {
    let mid = height / 2;
    mid.saturating_sub(CENTRAL_HALF_BAND)..(mid + CENTRAL_HALF_BAND + 1).min(height)
}

/// Distance along the optical axis to flat ground `agl` below the camera.
pub fn expected_central_distance<T: Real>(pitch_deg: T, agl: T) -> T {
    agl / pitch_deg.to_radians().sin()
}

/// `cf = D*_central / median(rough depth in the central rows)`.
pub fn adjustment_factor<T: Real>(rough: &DepthMap<T>, pitch_deg: T, agl: T) -> Result<T> {
    if !(pitch_deg > T::zero() && pitch_deg <= T::lit(90.0)) || !(agl > T::zero()) || !agl.is_finite() {
        return Err(Error::InvalidCamera(format!("cf needs pitch in (0, 90] and agl > 0, got {pitch_deg}, {agl}")));
    }
    let mut band: Vec<T> = central_rows(rough.height())
        .flat_map(|v| rough.row(v).iter().copied())
        .filter(|&z| valid_depth(z))
        .collect();
    let m = median(&mut band).ok_or(Error::CfUndefined)?;
    Ok(expected_central_distance(pitch_deg, agl) / m)
}

/// Rotate camera-frame points into a gravity-aligned frame: x right,
/// y forward (horizontal), z up, origin at the camera.
pub fn level_points<T: Real>(points: &[Vec3<T>], pitch_deg: T) -> Vec<Vec3<T>> {
    let (sp, cp) = pitch_deg.to_radians().sin_cos();
    points
        .iter()
        .map(|p| Vec3::new(p.x, cp * p.z - sp * p.y, -(sp * p.z + cp * p.y)))
        .collect()
}

/// Base CSF lengths before division by `cf`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SiteProfile {
    #[default]
    Default,
    /// Dense vegetation and buildings: finer cloth, looser threshold.
    Cluttered,
}

impl SiteProfile {
    /// `(cloth_resolution, class_threshold)` in metres.
    pub fn base_lengths(self) -> (f64, f64) {
        match self {
            SiteProfile::Default => (1.5, 0.5),
            SiteProfile::Cluttered => (0.5, 1.25),
        }
    }
}

impl FromStr for SiteProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "default" => Ok(Self::Default),
            "cluttered" => Ok(Self::Cluttered),
            _ => Err(Error::Config(format!("unknown site profile '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundSegConfig<T = f64> {
    pub profile: SiteProfile,
    /// Simulation settings in metric units. The cloth resolution and class
    /// threshold are overwritten from `profile`.
    pub csf: CsfParams<T>,
    /// Run the CSF on a nearest-neighbour downscale `(width, height)`.
    pub csf_input_size: Option<(usize, usize)>,
}

impl<T: Real> Default for GroundSegConfig<T> {
    fn default() -> Self {
        Self {
            profile: SiteProfile::Default,
            csf: CsfParams::default(),
            csf_input_size: None,
        }
    }
}

impl<T: Real> GroundSegConfig<T> {
    pub fn with_profile(profile: SiteProfile) -> Self {
        Self {
            profile,
            ..Self::default()
        }
    }

    /// Metric parameters before division by `cf`.
    pub fn metric_params(&self) -> CsfParams<T> {
        let (res, th) = self.profile.base_lengths();
        CsfParams {
            cloth_resolution: T::lit(res),
            class_threshold: T::lit(th),
            ..self.csf
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundSegmentation<T = f64> {
    /// Full-resolution mask.
    pub mask: GroundMask,
    pub cf: T,
    /// Rough depth at the resolution the CSF ran on.
    pub rough_depth: DepthMap<T>,
    pub n_points: usize,
}

/// Ground mask for one frame.
pub fn segment_ground<T: Real>(
    disp: &DisparityMap<T>,
    pose: &Pose<T>,
    k: &Intrinsics<T>,
    rough: &RoughScaleParams<T>,
    config: &GroundSegConfig<T>,
) -> Result<GroundSegmentation<T>> {
    k.validate()?;
    disp.ensure_dims(k.dims())?;
    let (full_w, full_h) = k.dims();
    let (disp_in, k_in) = match config.csf_input_size {
        Some((w, h)) if (w, h) != (full_w, full_h) => {
            if w == 0 || h == 0 || w > full_w || h > full_h {
                return Err(Error::Config(format!("csf input size {w}x{h} must be within {full_w}x{full_h}")));
            }
            (disp.resample_nearest(w, h), k.resized(w, h))
        }
        _ => (disp.clone(), *k),
    };

    let rough_depth = rough_scale(&disp_in, rough)?;
    let cf = adjustment_factor(&rough_depth, pose.pitch_deg, pose.agl)?;
    // Scaling the cloud by cf instead of the lengths by 1/cf is the same
    // classification, and a rescaled rough depth then yields the same cloud
    // up to rounding.
    let params = config.metric_params();
    let cloud = back_project(&rough_depth, &k_in);
    let level: Vec<Vec3<T>> = level_points(&cloud.points, pose.pitch_deg).into_iter().map(|p| p * cf).collect();
    let labels = csf_classify(&level, &params).map_err(|e| match e {
        Error::InvalidCloud | Error::CsfFailed(_) => e,
        other => Error::CsfFailed(other.to_string()),
    })?;

    let mut mask = Raster::filled(k_in.width, k_in.height, false);
    for (&pix, &ground) in cloud.pixels.iter().zip(&labels) {
        mask.data_mut()[pix] = ground;
    }
    if mask.dims() != (full_w, full_h) {
        mask = mask.resample_nearest(full_w, full_h);
    }
    Ok(GroundSegmentation {
        mask,
        cf,
        rough_depth,
        n_points: cloud.len(),
    })
}
