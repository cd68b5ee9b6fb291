//! Pinhole camera model.
//!
//! Camera frame: +X right, +Y down, +Z forward. World frame: local ENU with
//! +Z up. Integer pixel coordinates map directly through `K`.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Mat3, Vec3};
use crate::raster::{valid_depth, DepthMap, Raster};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics<T = f64> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: usize,
    pub height: usize,
}

impl<T: Real> Intrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let w = T::from_usize_lossy(self.width);
        let h = T::from_usize_lossy(self.height);
        let ok = self.fx > T::zero()
            && self.fy > T::zero()
            && self.cx > T::zero()
            && self.cx < w
            && self.cy > T::zero()
            && self.cy < h;
        if !ok {
            return Err(Error::InvalidCamera(format!("intrinsics out of range: {self:?}")));
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// `K⁻¹ · (u, v, 1)`.
    #[inline]
    pub fn unproject_dir(&self, u: T, v: T) -> Vec3<T> {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, T::one())
    }

    /// Intrinsics for a raster resampled with
    /// [`Raster::resample_nearest`](crate::raster::Raster::resample_nearest).
    pub fn resized(&self, width: usize, height: usize) -> Self {
        let sx = T::from_usize_lossy(self.width) / T::from_usize_lossy(width);
        let sy = T::from_usize_lossy(self.height) / T::from_usize_lossy(height);
        Self {
            fx: self.fx / sx,
            fy: self.fy / sy,
            cx: self.cx / sx,
            cy: self.cy / sy,
            width,
            height,
        }
    }

    pub fn cast<U: Real>(&self) -> Intrinsics<U> {
        Intrinsics {
            fx: U::lit(self.fx.as_f64()),
            fy: U::lit(self.fy.as_f64()),
            cx: U::lit(self.cx.as_f64()),
            cy: U::lit(self.cy.as_f64()),
            width: self.width,
            height: self.height,
        }
    }
}

impl Intrinsics<f64> {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let k: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.into(),
            source,
        })?;
        k.validate()?;
        Ok(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T = f64> {
    /// World → camera rotation.
    pub rotation: Mat3<T>,
    /// Camera center in the local metric frame.
    pub position: Vec3<T>,
    /// Degrees below the horizon: 0 = optical axis horizontal, 90 = nadir.
    pub pitch_deg: T,
    /// Height above ground level, meters.
    pub agl: T,
}

impl<T: Real> Pose<T> {
    pub fn new(rotation: Mat3<T>, position: Vec3<T>, pitch_deg: T, agl: T) -> Result<Self> {
        let p = Self {
            rotation,
            position,
            pitch_deg,
            agl,
        };
        p.validate()?;
        Ok(p)
    }

    /// Roll-free camera at `position` looking along `heading_deg` (clockwise
    /// from north, i.e. +Y) and tilted `pitch_deg` below the horizon.
    pub fn looking(position: Vec3<T>, heading_deg: T, pitch_deg: T, agl: T) -> Result<Self> {
        let (sh, ch) = heading_deg.to_radians().sin_cos();
        let (sp, cp) = pitch_deg.to_radians().sin_cos();
        let forward = Vec3::new(sh * cp, ch * cp, -sp);
        let right = Vec3::new(ch, -sh, T::zero());
        let down = forward.cross(right);
        Self::new(Mat3::from_rows(right, down, forward), position, pitch_deg, agl)
    }

    pub fn validate(&self) -> Result<()> {
        let eps = T::structural_eps();
        if self.rotation.orthonormality_error() > eps || (self.rotation.determinant() - T::one()).abs() > eps {
            return Err(Error::InvalidCamera("rotation is not a proper orthonormal matrix".into()));
        }
        if !(self.agl > T::zero()) {
            return Err(Error::InvalidCamera(format!("AGL must be positive, got {}", self.agl)));
        }
        if !(self.pitch_deg > T::zero() && self.pitch_deg <= T::lit(90.0)) {
            return Err(Error::InvalidCamera(format!("pitch must be in (0, 90], got {}", self.pitch_deg)));
        }
        if !self.position.is_finite() {
            return Err(Error::InvalidCamera("non-finite position".into()));
        }
        Ok(())
    }

    /// `R · (p − C)`.
    #[inline]
    pub fn to_camera(&self, p: Vec3<T>) -> Vec3<T> {
        self.rotation.mul_vec(p - self.position)
    }

    pub fn to_world(&self, p_c: Vec3<T>) -> Vec3<T> {
        self.rotation.transpose().mul_vec(p_c) + self.position
    }
}

/// Outcome of projecting one world point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection<T> {
    Visible { u: T, v: T, z: T },
    Behind,
    OutOfFrame,
}

pub fn project<T: Real>(point: Vec3<T>, pose: &Pose<T>, k: &Intrinsics<T>) -> Projection<T> {
    let p = pose.to_camera(point);
    if p.z <= T::zero() {
        return Projection::Behind;
    }
    let u = k.fx * p.x / p.z + k.cx;
    let v = k.fy * p.y / p.z + k.cy;
    let w = T::from_usize_lossy(k.width);
    let h = T::from_usize_lossy(k.height);
    if u >= T::zero() && u < w && v >= T::zero() && v < h {
        Projection::Visible { u, v, z: p.z }
    } else {
        Projection::OutOfFrame
    }
}

/// Camera-frame points with the linear index of the pixel each came from.
#[derive(Debug, Clone, Default)]
pub struct PointCloud<T = f64> {
    pub points: Vec<Vec3<T>>,
    pub pixels: Vec<usize>,
}

impl<T> PointCloud<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `depth(u, v) · K⁻¹ (u, v, 1)` for every valid pixel, row-major.
pub fn back_project<T: Real>(depth: &DepthMap<T>, k: &Intrinsics<T>) -> PointCloud<T> {
    let mut cloud = PointCloud {
        points: Vec::with_capacity(depth.len()),
        pixels: Vec::with_capacity(depth.len()),
    };
    for (u, v, z) in depth.pixels() {
        if valid_depth(z) {
            let dir = k.unproject_dir(T::from_usize_lossy(u), T::from_usize_lossy(v));
            cloud.points.push(dir * z);
            cloud.pixels.push(v * depth.width() + u);
        }
    }
    cloud
}

/// Angle in degrees between the ground plane and the central ray of `row`.
///
/// Grows with the row index. `None` means the ray does not reach the ground
/// (α ≤ 0°, at or above the horizon, or α ≥ 180°). Values beyond 90° occur
/// below the principal point of near-nadir cameras and still intersect.
pub fn row_ray_angle<T: Real>(row: usize, k: &Intrinsics<T>, pitch_deg: T) -> Option<T> {
    let offset = (T::from_usize_lossy(row) + T::lit(0.5) - k.cy) / k.fy;
    let alpha = pitch_deg + offset.atan().to_degrees();
    (alpha > T::zero() && alpha < T::lit(180.0)).then_some(alpha)
}

/// Per-pixel unit normals in the camera frame, oriented towards the camera.
///
/// Uses central differences of back-projected neighbors, so border pixels and
/// pixels next to invalid depth get `None`.
pub fn surface_normals<T: Real>(depth: &DepthMap<T>, k: &Intrinsics<T>) -> Raster<Option<Vec3<T>>> {
    let (w, h) = depth.dims();
    let point = |u: usize, v: usize| -> Option<Vec3<T>> {
        let z = depth.get(u, v);
        valid_depth(z).then(|| k.unproject_dir(T::from_usize_lossy(u), T::from_usize_lossy(v)) * z)
    };
    Raster::from_fn(w, h, |u, v| {
        if u == 0 || v == 0 || u + 1 >= w || v + 1 >= h {
            return None;
        }
        point(u, v)?;
        let tu = point(u + 1, v)? - point(u - 1, v)?;
        let tv = point(u, v + 1)? - point(u, v - 1)?;
        tv.cross(tu).normalized()
    })
}

/// One line of a pose JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub frame_id: String,
    pub position_xyz_m: [f64; 3],
    /// World → camera quaternion `[w, x, y, z]`.
    pub rotation: [f64; 4],
    pub pitch_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agl_m: Option<f64>,
}

impl PoseRecord {
    pub fn from_pose(frame_id: impl Into<String>, pose: &Pose<f64>, include_agl: bool) -> Self {
        Self {
            frame_id: frame_id.into(),
            position_xyz_m: [pose.position.x, pose.position.y, pose.position.z],
            rotation: pose.rotation.to_quaternion(),
            pitch_deg: pose.pitch_deg,
            agl_m: include_agl.then_some(pose.agl),
        }
    }

    /// Build the pose; `agl` is required when the record lacks one.
    pub fn to_pose(&self, agl: Option<f64>) -> Result<Pose<f64>> {
        let agl = self
            .agl_m
            .or(agl)
            .ok_or_else(|| Error::InvalidCamera(format!("frame {}: no AGL available", self.frame_id)))?;
        let [x, y, z] = self.position_xyz_m;
        Pose::new(Mat3::from_quaternion(self.rotation), Vec3::new(x, y, z), self.pitch_deg, agl)
    }
}

pub fn read_pose_records(reader: impl BufRead) -> Result<Vec<PoseRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Config(format!("pose line {}: {e}", i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PoseRecord =
            serde_json::from_str(&line).map_err(|e| Error::Config(format!("pose line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn k64() -> Intrinsics {
        Intrinsics::new(64.0, 64.0, 64.0, 32.0, 128, 64).unwrap()
    }

    fn nadir() -> Pose {
        Pose::looking(Vec3::new(0.0, 0.0, 50.0), 0.0, 90.0, 50.0).unwrap()
    }

    #[test]
    fn intrinsics_validation() {
        assert!(Intrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 2.0, 2.0, 4, 4).is_ok());
    }

    #[test]
    fn pose_validation() {
        let r = Mat3::identity();
        assert!(Pose::new(r, Vec3::zero(), 45.0, 0.0).is_err());
        assert!(Pose::new(r, Vec3::zero(), 0.0, 10.0).is_err());
        let mut bad = r;
        bad.rows[0][0] = 1.1;
        assert!(Pose::new(bad, Vec3::zero(), 45.0, 10.0).is_err());
    }

    #[test]
    fn principal_point_and_behind() {
        let k = k64();
        let pose = nadir();
        // straight down 10 m below the camera
        match project(Vec3::new(0.0, 0.0, 40.0), &pose, &k) {
            Projection::Visible { u, v, z } => {
                assert!((u - 64.0).abs() < 1e-9 && (v - 32.0).abs() < 1e-9 && (z - 10.0).abs() < 1e-9)
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(project(Vec3::new(0.0, 0.0, 55.0), &pose, &k), Projection::Behind);
        assert_eq!(project(Vec3::new(500.0, 0.0, 0.0), &pose, &k), Projection::OutOfFrame);
    }

    #[test]
    fn back_project_examples() {
        let k = k64();
        let cloud = back_project(&Raster::filled(128, 64, 1.0), &k);
        assert_eq!(cloud.len(), 128 * 64);
        assert!(cloud.points.iter().all(|p| p.z == 1.0));
        assert_eq!(cloud.points[0], Vec3::new(-1.0, -0.5, 1.0));

        let mut d = Raster::invalid(128, 64);
        d.set(64, 32, 7.0);
        let cloud = back_project(&d, &k);
        assert_eq!(cloud.points, vec![Vec3::new(0.0, 0.0, 7.0)]);
        assert_eq!(cloud.pixels, vec![32 * 128 + 64]);
    }

    #[test]
    fn row_angles() {
        let k = Intrinsics::<f64>::new(256.0, 256.0, 256.0, 128.0, 512, 256).unwrap();
        // row whose centre is the principal point
        let k_odd = Intrinsics::<f64>::new(256.0, 256.0, 256.0, 128.5, 512, 256).unwrap();
        assert!((row_ray_angle(128, &k_odd, 45.0).unwrap() - 45.0).abs() < 1e-12);
        assert!((row_ray_angle(128, &k, 90.0).unwrap() - 90.0).abs() < 0.2);
        // fy = H: top row ≈ 45 − atan(0.5)
        let top = row_ray_angle(0, &k, 45.0).unwrap();
        let expected = 45.0 - ((0.5f64 - 128.0) / 256.0).atan().abs().to_degrees();
        assert!((top - expected).abs() < 1e-12);
        assert!((top - 18.5).abs() < 0.2);
        assert_eq!(row_ray_angle(0, &k, 10.0), None);
        let angles: Vec<_> = (0..256).filter_map(|r| row_ray_angle(r, &k, 45.0)).collect();
        assert!(angles.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn fronto_parallel_normals() {
        let k = k64();
        let n = surface_normals(&Raster::filled(128, 64, 5.0), &k);
        assert!(n.get(0, 0).is_none());
        for (u, v, nv) in n.pixels() {
            if u > 0 && v > 0 && u < 127 && v < 63 {
                let nv = nv.unwrap();
                assert!((nv.z + 1.0).abs() < 1e-12 && nv.x.abs() < 1e-12 && nv.y.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normals_invalid_next_to_holes() {
        let k = k64();
        let mut d = Raster::filled(128, 64, 5.0);
        d.set(10, 10, f64::NAN);
        let n = surface_normals(&d, &k);
        assert!(n.get(11, 10).is_none() && n.get(10, 11).is_none() && n.get(12, 10).is_some());
    }

    #[test]
    fn sphere_normals_match_analytic() {
        // sphere of radius 3 centred 10 m ahead
        let k = k64();
        let (c, r) = (Vec3::new(0.0, 0.0, 10.0), 3.0);
        let depth = Raster::from_fn(128, 64, |u, v| {
            let d = k.unproject_dir(u as f64, v as f64);
            let dn = d.normalized().unwrap();
            let b = dn.dot(c);
            let disc = b * b - (c.dot(c) - r * r);
            if disc <= 0.0 {
                return f64::NAN;
            }
            (b - disc.sqrt()) * dn.z
        });
        let normals = surface_normals(&depth, &k);
        let mut checked = 0;
        for (u, v, n) in normals.pixels() {
            let z = depth.get(u, v);
            let Some(n) = n else { continue };
            let p = k.unproject_dir(u as f64, v as f64) * z;
            let analytic = (p - c).normalized().unwrap();
            // stay away from the silhouette
            if analytic.dot(-p.normalized().unwrap()) < 0.5 {
                continue;
            }
            let ang = n.dot(analytic).clamp(-1.0, 1.0).acos().to_degrees();
            assert!(ang < 3.0, "pixel ({u},{v}) off by {ang}°");
            checked += 1;
        }
        assert!(checked > 100);
    }

    #[test]
    fn pose_record_round_trip() {
        let pose = Pose::looking(Vec3::new(1.0, 2.0, 80.0), 30.0, 45.0, 50.0).unwrap();
        let rec = PoseRecord::from_pose("f0", &pose, true);
        let line = serde_json::to_string(&rec).unwrap();
        let back = read_pose_records(line.as_bytes()).unwrap().remove(0).to_pose(None).unwrap();
        assert!(back.rotation.mul_mat(&pose.rotation.transpose()).orthonormality_error() < 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                assert!((back.rotation.rows[i][j] - pose.rotation.rows[i][j]).abs() < 1e-12);
            }
        }
        let no_agl = PoseRecord::from_pose("f1", &pose, false);
        assert!(no_agl.to_pose(None).is_err());
        assert_eq!(no_agl.to_pose(Some(12.0)).unwrap().agl, 12.0);
    }

    proptest! {
        #[test]
        fn project_back_project_round_trip(u in 0.0f64..127.0, v in 0.0f64..63.0, z in 1.0f64..500.0,
                                           heading in 0.0f64..360.0, pitch in 5.0f64..90.0) {
            let k = k64();
            let pose = Pose::looking(Vec3::new(3.0, -4.0, 120.0), heading, pitch, 100.0).unwrap();
            let p_c = k.unproject_dir(u, v) * z;
            let world = pose.to_world(p_c);
            match project(world, &pose, &k) {
                Projection::Visible { u: u2, v: v2, z: z2 } => {
                    let back = pose.to_world(k.unproject_dir(u2, v2) * z2);
                    prop_assert!((back - world).norm() < 1e-6);
                    prop_assert!((u2 - u).abs() < 1e-6 && (v2 - v).abs() < 1e-6);
                }
                other => prop_assert!(false, "{:?}", other),
            }
        }

        #[test]
        fn looking_pose_is_proper_rotation(heading in -360.0f64..360.0, pitch in 0.1f64..90.0) {
            let pose = Pose::looking(Vec3::zero(), heading, pitch, 1.0).unwrap();
            prop_assert!(pose.rotation.orthonormality_error() < 1e-12);
            // world up seen from the camera: (0, -cos p, -sin p)
            let up = pose.rotation.mul_vec(Vec3::new(0.0, 0.0, 1.0));
            let (sp, cp) = pitch.to_radians().sin_cos();
            prop_assert!(up.x.abs() < 1e-12 && (up.y + cp).abs() < 1e-12 && (up.z + sp).abs() < 1e-12);
        }
    }
}
