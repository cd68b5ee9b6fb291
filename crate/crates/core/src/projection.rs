//! Occlusion-aware projection of terrain points into a frame.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::camera::{project, Intrinsics, Pose, Projection};
use crate::error::{Error, Result};
use crate::geodesy::LocalMetricPoint;
use crate::raster::{GroundMask, Raster};
use crate::scalar::Real;

/// Per-pixel metric anchors: camera-frame Z of the surviving terrain point,
/// NaN where empty.
#[derive(Debug, Clone)]
pub struct SparseGroundMap<T = f64> {
    depth: Raster<T>,
}

impl<T: Real> PartialEq for SparseGroundMap<T> {
    /// Empty cells compare equal to each other.
    fn eq(&self, other: &Self) -> bool {
        self.dims() == other.dims()
            && self
                .depth
                .data()
                .iter()
                .zip(other.depth.data())
                .all(|(a, b)| a == b || (a.is_nan() && b.is_nan()))
    }
}

impl<T: Real> SparseGroundMap<T> {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            depth: Raster::invalid(width, height),
        }
    }

    pub fn from_raster(depth: Raster<T>) -> Self {
        Self { depth }
    }

    pub fn raster(&self) -> &Raster<T> {
        &self.depth
    }

    pub fn dims(&self) -> (usize, usize) {
        self.depth.dims()
    }

    pub fn get(&self, u: usize, v: usize) -> Option<T> {
        let z = self.depth.get(u, v);
        z.is_finite().then_some(z)
    }

    pub fn insert(&mut self, u: usize, v: usize, z: T) {
        self.depth.set(u, v, z);
    }

    /// Stored anchors `(u, v, z)`, row-major.
    pub fn anchors(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.depth.pixels().filter(|(_, _, z)| z.is_finite())
    }

    pub fn count(&self) -> usize {
        self.depth.count_valid()
    }

    /// `u,v,z_m` CSV with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("u,v,z_m\n");
        for (u, v, z) in self.anchors() {
            let _ = writeln!(out, "{u},{v},{z}");
        }
        out
    }
}

/// Project every point; keep the nearest one per pixel (floor binning).
pub fn project_gdem<T: Real>(
    points: &[LocalMetricPoint<T>],
    pose: &Pose<T>,
    k: &Intrinsics<T>,
) -> Result<SparseGroundMap<T>> {
    let mut map = SparseGroundMap::empty(k.width, k.height);
    let mut any = false;
    for &p in points {
        if let Projection::Visible { u, v, z } = project(p, pose, k) {
            let (ui, vi) = (u.floor().to_usize().unwrap_or(0), v.floor().to_usize().unwrap_or(0));
            let current = map.depth.get(ui, vi);
            if !(current <= z) {
                map.depth.set(ui, vi, z);
            }
            any = true;
        }
    }
    if !any {
        return Err(Error::EmptyProjection);
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcclusionConfig {
    /// Window width in pixels.
    pub window_width: usize,
    /// Window height in pixels.
    pub window_height: usize,
    /// Relative depth margin: a point is occluded when it lies more than
    /// `ratio · z` behind the nearest point of its window.
    pub threshold_ratio: f64,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        Self {
            window_width: 7,
            window_height: 7 / 2,
            threshold_ratio: 0.04,
        }
    }
}

/// Drop anchors that have a sufficiently nearer anchor in their window.
///
/// Every decision reads the input map, so removals do not cascade and the
/// result does not depend on traversal order.
pub fn reject_occluded<T: Real>(map: &SparseGroundMap<T>, cfg: &OcclusionConfig) -> SparseGroundMap<T> {
    let (w, h) = map.dims();
    let ratio = T::lit(cfg.threshold_ratio);
    let (left, up) = (cfg.window_width / 2, cfg.window_height / 2);
    let mut out = map.clone();
    for (u, v, z) in map.anchors() {
        let (u0, u1) = (u.saturating_sub(left), (u + cfg.window_width - left).min(w));
        let (v0, v1) = (v.saturating_sub(up), (v + cfg.window_height - up).min(h));
        let mut nearest = T::infinity();
        for vv in v0..v1 {
            for (uu, &zz) in map.depth.row(vv)[u0..u1].iter().enumerate() {
                if (u0 + uu, vv) != (u, v) && zz < nearest {
                    nearest = zz;
                }
            }
        }
        if z - nearest > ratio * z {
            out.depth.set(u, v, T::nan());
        }
    }
    out
}

/// Accepted metric depth range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeMask<T = f64> {
    pub min: T,
    pub max: T,
}

impl<T: Real> RangeMask<T> {
    pub fn new(min: T, max: T) -> Result<Self> {
        if !(min > T::zero() && min < max && max.is_finite()) {
            return Err(Error::InvalidRange(format!("{min}:{max}")));
        }
        Ok(Self { min, max })
    }

    #[inline]
    pub fn contains(&self, z: T) -> bool {
        z >= self.min && z <= self.max
    }
}

impl FromStr for RangeMask<f64> {
    type Err = Error;

    /// `min:max` in meters, e.g. `30:150`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s.split_once(':').ok_or_else(|| Error::InvalidRange(s.into()))?;
        let parse = |x: &str| x.trim().parse::<f64>().map_err(|_| Error::InvalidRange(s.into()));
        Self::new(parse(a)?, parse(b)?)
    }
}

/// Keep anchors on ground pixels whose depth lies inside the range.
pub fn apply_masks<T: Real>(
    map: &SparseGroundMap<T>,
    ground: &GroundMask,
    range: &RangeMask<T>,
) -> Result<SparseGroundMap<T>> {
    ground.ensure_dims(map.dims())?;
    let (w, h) = map.dims();
    let mut out = SparseGroundMap::empty(w, h);
    for (u, v, z) in map.anchors() {
        if ground.get(u, v) && range.contains(z) {
            out.depth.set(u, v, z);
        }
    }
    if out.count() == 0 {
        return Err(Error::NoGroundAnchors);
    }
    Ok(out)
}
