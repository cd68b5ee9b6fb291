//! Scale recovery strategies for relative disparity.
//!
//! Every strategy ends in the same affine model in disparity space,
//! `d̄ = s·d̂ + t`, with metric depth `1/d̄`. Pixels whose scaled disparity is
//! not positive are marked invalid rather than clamped.

use serde::{Deserialize, Serialize};

use crate::camera::{row_ray_angle, surface_normals, Intrinsics, Pose};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::projection::{RangeMask, SparseGroundMap};
use crate::raster::{valid_depth, DepthMap, DisparityMap, GroundMask, Raster};
use crate::scalar::{median, Real};

/// Minimum number of anchor pairs accepted by [`lsq_align`].
pub const DEFAULT_MIN_ANCHORS: usize = 10;
/// Max angle between a pixel normal and the expected ground normal for the
/// camera-height ground pre-selection, degrees.
pub const DEFAULT_GROUND_NORMAL_TOLERANCE_DEG: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams<T = f64> {
    pub s: T,
    pub t: T,
}

impl<T: Real> ScaleParams<T> {
    pub fn new(s: T, t: T) -> Self {
        Self { s, t }
    }

    #[inline]
    pub fn apply(&self, d: T) -> T {
        self.s * d + self.t
    }
}

/// Outcome of a least-squares fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment<T = f64> {
    pub params: ScaleParams<T>,
    /// RMS residual in disparity units.
    pub residual_rms: T,
    pub n_pairs: usize,
}

/// Recovered parameters plus the metric depth they produce.
#[derive(Debug, Clone)]
pub struct ScaleOutcome<T = f64> {
    pub alignment: Alignment<T>,
    pub depth: DepthMap<T>,
}

/// Sum of squared residuals `Σ (s·x + t − y)²`.
pub fn lsq_objective<T: Real>(pred: &[T], reference: &[T], params: &ScaleParams<T>) -> T {
    pred.iter()
        .zip(reference)
        .map(|(&x, &y)| {
            let r = params.apply(x) - y;
            r * r
        })
        .sum()
}

/// Closed-form least-squares fit of `reference ≈ s·pred + t`.
///
/// Solves the 2×2 normal equations in mean-centred form.
pub fn lsq_align<T: Real>(pred: &[T], reference: &[T], min_pairs: usize) -> Result<Alignment<T>> {
    assert_eq!(pred.len(), reference.len(), "paired slices must have equal length");
    let n = pred.len();
    if n < min_pairs.max(2) {
        return Err(Error::InsufficientAnchors {
            found: n,
            required: min_pairs.max(2),
        });
    }
    if pred.iter().chain(reference).any(|x| !x.is_finite()) {
        return Err(Error::DegenerateSystem);
    }
    let nf = T::from_usize_lossy(n);
    let mean_x = pred.iter().copied().sum::<T>() / nf;
    let mean_y = reference.iter().copied().sum::<T>() / nf;
    let (mut sxx, mut sxy, mut sum_x2) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in pred.iter().zip(reference) {
        let dx = x - mean_x;
        sxx = sxx + dx * dx;
        sxy = sxy + dx * (y - mean_y);
        sum_x2 = sum_x2 + x * x;
    }
    if !(sxx > T::epsilon() * T::lit(16.0) * sum_x2) {
        return Err(Error::DegenerateSystem);
    }
    let s = sxy / sxx;
    let t = mean_y - s * mean_x;
    let params = ScaleParams::new(s, t);
    if !(s > T::zero()) {
        return Err(Error::NonPositiveScale {
            s: s.as_f64(),
            t: t.as_f64(),
        });
    }
    let residual_rms = (lsq_objective(pred, reference, &params) / nf).sqrt();
    Ok(Alignment {
        params,
        residual_rms,
        n_pairs: n,
    })
}

/// Metric depth `1 / (s·d̂ + t)`; non-positive scaled disparity is invalid.
pub fn apply_scale<T: Real>(disp: &DisparityMap<T>, params: &ScaleParams<T>) -> DepthMap<T> {
    disp.map(|d| {
        let sd = params.apply(d);
        if d.is_finite() && sd > T::zero() {
            T::one() / sd
        } else {
            T::nan()
        }
    })
}

/// Scale- and shift-invariant normalisation of a disparity map.
#[derive(Debug, Clone)]
pub struct SsiNormalized<T = f64> {
    pub map: DisparityMap<T>,
    /// Median of the valid input values.
    pub shift: T,
    /// Mean absolute deviation from the median.
    pub scale: T,
}

pub fn ssi_normalize<T: Real>(d: &DisparityMap<T>) -> Result<SsiNormalized<T>> {
    let mut valid: Vec<T> = d.data().iter().copied().filter(|x| x.is_finite()).collect();
    let m = valid.len();
    let shift = median(&mut valid).ok_or(Error::DegenerateDisparity)?;
    let scale = valid.iter().map(|&x| (x - shift).abs()).sum::<T>() / T::from_usize_lossy(m);
    if !(scale > T::zero()) {
        return Err(Error::DegenerateDisparity);
    }
    Ok(SsiNormalized {
        map: d.map(|x| (x - shift) / scale),
        shift,
        scale,
    })
}

/// `sf = median(D*) / median(D)` over the pixels valid in both maps.
pub fn median_scale<T: Real>(pred: &DepthMap<T>, reference: &DepthMap<T>) -> Result<T> {
    reference.ensure_dims(pred.dims())?;
    let (mut p, mut r) = (Vec::new(), Vec::new());
    for (&a, &b) in pred.data().iter().zip(reference.data()) {
        if valid_depth(a) && valid_depth(b) {
            p.push(a);
            r.push(b);
        }
    }
    let mp = median(&mut p).ok_or(Error::NoOverlap)?;
    let mr = median(&mut r).ok_or(Error::NoOverlap)?;
    Ok(mr / mp)
}

/// Constant disparity-space parameters fitted offline on a validation set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoughScaleParams<T = f64> {
    pub s_bar: T,
    pub t_bar: T,
}

impl<T: Real> RoughScaleParams<T> {
    pub fn new(s_bar: T, t_bar: T) -> Result<Self> {
        if !(s_bar > T::zero()) || !t_bar.is_finite() {
            return Err(Error::Config(format!("rough params need s_bar > 0, got ({s_bar}, {t_bar})")));
        }
        Ok(Self { s_bar, t_bar })
    }
}

/// Fixed scaling: `1 / (s̄·d̂ + t̄)`.
///
/// Fails with `RoughScaleDiverged` when more than half of the valid input
/// pixels end up with a non-positive scaled disparity.
pub fn fixed_scale_apply<T: Real>(disp: &DisparityMap<T>, params: &RoughScaleParams<T>) -> Result<DepthMap<T>> {
    let depth = apply_scale(disp, &ScaleParams::new(params.s_bar, params.t_bar));
    let total = disp.count_valid();
    let invalid = total - depth.count_valid();
    if total == 0 || 2 * invalid > total {
        return Err(Error::RoughScaleDiverged { invalid, total });
    }
    Ok(depth)
}

/// Flat-ground disparity per row: the inverse camera-frame depth at which the
/// row's central ray meets a horizontal plane `agl` below the camera.
///
/// With α the ray's angle to the ground and θ = α − pitch its angle to the
/// optical axis, the ray length is `agl / sin α` and its Z component is
/// `agl · cos θ / sin α`. Rows that miss the ground are invalid.
pub fn height_disparity_map<T: Real>(pose: &Pose<T>, k: &Intrinsics<T>) -> Result<DisparityMap<T>> {
    let mut any = false;
    let rows: Vec<T> = (0..k.height)
        .map(|r| match row_ray_angle(r, k, pose.pitch_deg) {
            Some(alpha) => {
                any = true;
                let theta = (alpha - pose.pitch_deg).to_radians();
                alpha.to_radians().sin() / (pose.agl * theta.cos())
            }
            None => T::nan(),
        })
        .collect();
    if !any {
        return Err(Error::HorizonOnly);
    }
    Ok(Raster::from_fn(k.width, k.height, |_, v| rows[v]))
}

/// World "up" expressed in the camera frame of a roll-free camera.
pub fn camera_up<T: Real>(pitch_deg: T) -> Vec3<T> {
    let (sp, cp) = pitch_deg.to_radians().sin_cos();
    Vec3::new(T::zero(), -cp, -sp)
}

/// Pixels whose surface normal lies within `tolerance_deg` of the ideal
/// ground normal.
pub fn normal_ground_mask<T: Real>(depth: &DepthMap<T>, k: &Intrinsics<T>, pitch_deg: T, tolerance_deg: T) -> GroundMask {
    let up = camera_up(pitch_deg);
    let cos_tol = tolerance_deg.to_radians().cos();
    surface_normals(depth, k).map(|n| n.is_some_and(|n| n.dot(up) >= cos_tol))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraHeightOptions {
    /// Pair only ground-mask pixels with the flat-ground map; otherwise every
    /// valid row is used.
    pub restrict_to_ground: bool,
    pub min_anchors: usize,
}

impl Default for CameraHeightOptions {
    fn default() -> Self {
        Self {
            restrict_to_ground: true,
            min_anchors: DEFAULT_MIN_ANCHORS,
        }
    }
}

/// Camera-height scaling in disparity space: align `d̂` against the
/// flat-ground disparity map over the ground pixels.
pub fn camera_height_scale<T: Real>(
    disp: &DisparityMap<T>,
    pose: &Pose<T>,
    k: &Intrinsics<T>,
    ground: &GroundMask,
    opts: &CameraHeightOptions,
) -> Result<ScaleOutcome<T>> {
    disp.ensure_dims(k.dims())?;
    ground.ensure_dims(k.dims())?;
    let h_star = height_disparity_map(pose, k)?;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, (&d, &h)) in disp.data().iter().zip(h_star.data()).enumerate() {
        if d.is_finite() && h.is_finite() && (!opts.restrict_to_ground || ground.data()[i]) {
            x.push(d);
            y.push(h);
        }
    }
    let alignment = lsq_align(&x, &y, opts.min_anchors)?;
    Ok(ScaleOutcome {
        depth: apply_scale(disp, &alignment.params),
        alignment,
    })
}

/// Single-factor camera-height scaling for up-to-scale depth:
/// `sf = agl / median(h_gp)`, where `h_gp` is the height of each ground
/// pixel's back-projected point below the camera.
pub fn camera_height_factor<T: Real>(
    depth: &DepthMap<T>,
    pose: &Pose<T>,
    k: &Intrinsics<T>,
    ground: &GroundMask,
) -> Result<T> {
    ground.ensure_dims(depth.dims())?;
    let down = -camera_up(pose.pitch_deg);
    let mut heights: Vec<T> = depth
        .pixels()
        .filter(|&(u, v, z)| ground.get(u, v) && valid_depth(z))
        .map(|(u, v, z)| (k.unproject_dir(T::from_usize_lossy(u), T::from_usize_lossy(v)) * z).dot(down))
        .filter(|h| *h > T::zero())
        .collect();
    let m = median(&mut heights).ok_or(Error::InsufficientAnchors { found: 0, required: 1 })?;
    Ok(pose.agl / m)
}

/// `(d̂, 1/z)` pairs at anchor pixels where the disparity is finite.
pub fn anchor_pairs<T: Real>(disp: &DisparityMap<T>, anchors: &SparseGroundMap<T>) -> Result<(Vec<T>, Vec<T>)> {
    disp.ensure_dims(anchors.dims())?;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (u, v, z) in anchors.anchors() {
        let d = disp.get(u, v);
        if d.is_finite() {
            x.push(d);
            y.push(T::one() / z);
        }
    }
    Ok((x, y))
}

/// Align `d̂` against the inverted anchor depths.
pub fn tandepth_scale<T: Real>(
    disp: &DisparityMap<T>,
    anchors: &SparseGroundMap<T>,
    min_anchors: usize,
) -> Result<ScaleOutcome<T>> {
    let (x, y) = anchor_pairs(disp, anchors)?;
    let alignment = lsq_align(&x, &y, min_anchors)?;
    Ok(ScaleOutcome {
        depth: apply_scale(disp, &alignment.params),
        alignment,
    })
}

/// Offline upper bound: align against the dense reference disparity over the
/// evaluation range.
pub fn reference_scale<T: Real>(
    disp: &DisparityMap<T>,
    reference_depth: &DepthMap<T>,
    range: &RangeMask<T>,
    min_anchors: usize,
) -> Result<ScaleOutcome<T>> {
    disp.ensure_dims(reference_depth.dims())?;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (&d, &z) in disp.data().iter().zip(reference_depth.data()) {
        if d.is_finite() && valid_depth(z) && range.contains(z) {
            x.push(d);
            y.push(T::one() / z);
        }
    }
    let alignment = lsq_align(&x, &y, min_anchors)?;
    Ok(ScaleOutcome {
        depth: apply_scale(disp, &alignment.params),
        alignment,
    })
}
