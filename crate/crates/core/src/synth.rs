//! Synthetic scenes with known geometry for closed-loop testing.
//!
//! Everything here is `f64`: these are reference generators, not the code
//! under test.

use std::f64::consts::PI;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera::{Intrinsics, Pose, PoseRecord};
use crate::error::{Error, Result};
use crate::gdem::{save_gdem, GdemCloud};
use crate::geom::Vec3;
use crate::pfm;
use crate::raster::{DepthMap, DisparityMap, GroundMask, Raster};

const MARCH_STEP: f64 = 1.0;
const MAX_DEPTH: f64 = 20_000.0;
const BISECTION_TOL: f64 = 1e-7;

/// Axis-aligned block standing on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerrainBox {
    pub min_xy: [f64; 2],
    pub max_xy: [f64; 2],
    /// Height above the ground plane.
    pub height: f64,
}

impl TerrainBox {
    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_xy[0] && x <= self.max_xy[0] && y >= self.min_xy[1] && y <= self.max_xy[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnalyticTerrain {
    Plane {
        z0: f64,
    },
    /// Rises by `grade_percent` per 100 m towards `azimuth_deg` (clockwise
    /// from +Y).
    LinearSlope {
        z0: f64,
        grade_percent: f64,
        azimuth_deg: f64,
    },
    /// `z0 + A·sin(2πx/λ)·sin(2πy/λ)`.
    SinusoidalHills {
        z0: f64,
        amplitude: f64,
        wavelength: f64,
    },
    PlanePlusBoxes {
        z0: f64,
        boxes: Vec<TerrainBox>,
    },
}

impl AnalyticTerrain {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            AnalyticTerrain::Plane { z0 } => z0.is_finite(),
            AnalyticTerrain::LinearSlope { z0, grade_percent, azimuth_deg } => {
                z0.is_finite() && grade_percent.is_finite() && azimuth_deg.is_finite()
            }
            AnalyticTerrain::SinusoidalHills { z0, amplitude, wavelength } => {
                z0.is_finite() && amplitude.is_finite() && *wavelength > 0.0
            }
            AnalyticTerrain::PlanePlusBoxes { z0, boxes } => {
                z0.is_finite()
                    && boxes.iter().all(|b| {
                        b.height > 0.0 && b.min_xy[0] < b.max_xy[0] && b.min_xy[1] < b.max_xy[1]
                    })
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid terrain {self:?}")))
        }
    }

    /// Bare-earth height, ignoring boxes.
    pub fn ground_height(&self, x: f64, y: f64) -> f64 {
        match *self {
            AnalyticTerrain::Plane { z0 } | AnalyticTerrain::PlanePlusBoxes { z0, .. } => z0,
            AnalyticTerrain::LinearSlope { z0, grade_percent, azimuth_deg } => {
                let (s, c) = azimuth_deg.to_radians().sin_cos();
                z0 + grade_percent / 100.0 * (x * s + y * c)
            }
            AnalyticTerrain::SinusoidalHills { z0, amplitude, wavelength } => {
                let k = 2.0 * PI / wavelength;
                z0 + amplitude * (k * x).sin() * (k * y).sin()
            }
        }
    }

    /// Surface height including boxes.
    pub fn height(&self, x: f64, y: f64) -> f64 {
        let ground = self.ground_height(x, y);
        match self {
            AnalyticTerrain::PlanePlusBoxes { boxes, .. } => boxes
                .iter()
                .filter(|b| b.contains(x, y))
                .map(|b| ground + b.height)
                .fold(ground, f64::max),
            _ => ground,
        }
    }

    /// Camera-frame depth and hit type along `C + t·w`, where `t` is the
    /// camera Z of the point. `None` when the ray misses.
    fn intersect(&self, c: Vec3, w: Vec3) -> Option<(f64, bool)> {
        match self {
            AnalyticTerrain::Plane { .. } | AnalyticTerrain::LinearSlope { .. } => {
                self.intersect_ground_plane(c, w).map(|t| (t, true))
            }
            AnalyticTerrain::PlanePlusBoxes { z0, boxes } => {
                let mut best = self.intersect_ground_plane(c, w).map(|t| (t, true));
                for b in boxes {
                    if let Some(t) = ray_box(c, w, b, *z0) {
                        if best.is_none_or(|(bt, _)| t < bt) {
                            best = Some((t, false));
                        }
                    }
                }
                best
            }
            AnalyticTerrain::SinusoidalHills { z0, amplitude, .. } => {
                let top = z0 + amplitude.abs();
                let mut t = if c.z > top {
                    if w.z >= 0.0 {
                        return None;
                    }
                    (top - c.z) / w.z
                } else {
                    0.0
                };
                let f = |t: f64| c.z + t * w.z - self.height(c.x + t * w.x, c.y + t * w.y);
                if f(t) <= 0.0 {
                    return (t > 0.0).then_some((t, true));
                }
                let (mut lo, mut hi) = loop {
                    let next = t + MARCH_STEP;
                    if next > MAX_DEPTH {
                        return None;
                    }
                    if f(next) <= 0.0 {
                        break (t, next);
                    }
                    t = next;
                };
                while hi - lo > BISECTION_TOL {
                    let mid = 0.5 * (lo + hi);
                    if f(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Some((0.5 * (lo + hi), true))
            }
        }
    }

    /// Bare-earth plane hit for the planar kinds.
    fn intersect_ground_plane(&self, c: Vec3, w: Vec3) -> Option<f64> {
        let (a, bx, by) = match *self {
            AnalyticTerrain::Plane { z0 } | AnalyticTerrain::PlanePlusBoxes { z0, .. } => (z0, 0.0, 0.0),
            AnalyticTerrain::LinearSlope { z0, grade_percent, azimuth_deg } => {
                let (s, co) = azimuth_deg.to_radians().sin_cos();
                (z0, grade_percent / 100.0 * s, grade_percent / 100.0 * co)
            }
            AnalyticTerrain::SinusoidalHills { .. } => return None,
        };
        let t = (a + bx * c.x + by * c.y - c.z) / (w.z - bx * w.x - by * w.y);
        (t.is_finite() && t > 0.0 && t <= MAX_DEPTH).then_some(t)
    }
}

/// Entry parameter of the ray into a box standing on `z0`, slab method.
fn ray_box(c: Vec3, w: Vec3, b: &TerrainBox, z0: f64) -> Option<f64> {
    let lo = [b.min_xy[0], b.min_xy[1], z0];
    let hi = [b.max_xy[0], b.max_xy[1], z0 + b.height];
    let (o, d) = ([c.x, c.y, c.z], [w.x, w.y, w.z]);
    let (mut t0, mut t1) = (0.0f64, MAX_DEPTH);
    for i in 0..3 {
        if d[i].abs() < 1e-15 {
            if o[i] < lo[i] || o[i] > hi[i] {
                return None;
            }
            continue;
        }
        let (a, b) = ((lo[i] - o[i]) / d[i], (hi[i] - o[i]) / d[i]);
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
        if t0 > t1 {
            return None;
        }
    }
    (t0 > 0.0).then_some(t0)
}

#[derive(Debug, Clone)]
pub struct RenderedView {
    pub depth: DepthMap,
    /// Pixels whose ray hits bare earth.
    pub ground: GroundMask,
}

/// Ray-cast camera-frame depth; pixels whose ray misses are invalid.
pub fn render_view(terrain: &AnalyticTerrain, pose: &Pose, k: &Intrinsics) -> Result<RenderedView> {
    terrain.validate()?;
    k.validate()?;
    pose.validate()?;
    if pose.position.z <= terrain.height(pose.position.x, pose.position.y) {
        return Err(Error::InvalidCamera("camera below the terrain surface".into()));
    }
    let rt = pose.rotation.transpose();
    let mut depth = Raster::invalid(k.width, k.height);
    let mut ground = Raster::filled(k.width, k.height, false);
    for v in 0..k.height {
        for u in 0..k.width {
            let w = rt.mul_vec(k.unproject_dir(u as f64, v as f64));
            if let Some((t, is_ground)) = terrain.intersect(pose.position, w) {
                depth.set(u, v, t);
                ground.set(u, v, is_ground);
            }
        }
    }
    Ok(RenderedView { depth, ground })
}

pub fn render_reference_depth(terrain: &AnalyticTerrain, pose: &Pose, k: &Intrinsics) -> Result<DepthMap> {
    render_view(terrain, pose, k).map(|r| r.depth)
}

/// `[x_min, x_max, y_min, y_max]` in the local frame.
pub type Extent = [f64; 4];

/// Regular grid of bare-earth heights with optional Gaussian vertical noise.
pub fn sample_synthetic_gdem(terrain: &AnalyticTerrain, extent: Extent, spacing: f64, sigma: f64, seed: u64) -> Result<GdemCloud> {
    if !(spacing > 0.0) || !(sigma >= 0.0) || !(extent[0] <= extent[1] && extent[2] <= extent[3]) {
        return Err(Error::Config(format!("invalid GDEM sampling: spacing {spacing}, sigma {sigma}, extent {extent:?}")));
    }
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = |lo: f64, hi: f64| ((hi - lo) / spacing + 1e-9).floor() as usize + 1;
    let (nx, ny) = (count(extent[0], extent[1]), count(extent[2], extent[3]));
    let mut points = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (x, y) = (extent[0] + i as f64 * spacing, extent[2] + j as f64 * spacing);
            let dz = if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            points.push(Vec3::new(x, y, terrain.ground_height(x, y) + dz));
        }
    }
    GdemCloud::raw(points)
}

/// Relative disparity `d̂ = (n/D − t0)/s0` with `n = exp(σ·ε)`, `ε ~ N(0,1)`.
pub fn make_relative_disparity(depth: &DepthMap, s0: f64, t0: f64, sigma: f64, seed: u64) -> Result<DisparityMap> {
    if !(s0 > 0.0) || !t0.is_finite() || !(sigma >= 0.0) {
        return Err(Error::Config(format!("invalid distortion s0={s0}, t0={t0}, sigma={sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = Normal::new(0.0, 1.0).expect("unit normal");
    Ok(depth.map(|z| {
        let n = if sigma > 0.0 { (sigma * eps.sample(&mut rng)).exp() } else { 1.0 };
        if z > 0.0 && z.is_finite() {
            (n / z - t0) / s0
        } else {
            f64::NAN
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub terrain: AnalyticTerrain,
    pub width: usize,
    pub height: usize,
    pub agl: f64,
    pub pitch_deg: f64,
    pub heading_deg: f64,
    pub n_frames: usize,
    /// Distance between consecutive camera positions along the heading.
    pub frame_step_m: f64,
    pub gdem_spacing: f64,
    pub gdem_sigma: f64,
    /// Half-width of the GDEM grid around the camera track.
    pub gdem_margin: f64,
    pub s0: f64,
    pub t0: f64,
    pub disparity_noise: f64,
    /// Fixed-scale parameters for the rough depth; defaults to a 20% error
    /// on `(s0, t0)`.
    pub rough: Option<[f64; 2]>,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            terrain: AnalyticTerrain::Plane { z0: 100.0 },
            width: 256,
            height: 128,
            agl: 50.0,
            pitch_deg: 45.0,
            heading_deg: 0.0,
            n_frames: 1,
            frame_step_m: 20.0,
            gdem_spacing: 30.0,
            gdem_sigma: 0.0,
            gdem_margin: 300.0,
            s0: 3.0,
            t0: 0.2,
            disparity_noise: 0.0,
            rough: None,
            seed: 0,
        }
    }
}

impl SceneSpec {
    /// Square pixels, horizontal FoV 90° when width = 2·height.
    pub fn intrinsics(&self) -> Result<Intrinsics> {
        let f = self.height as f64;
        Intrinsics::new(f, f, self.width as f64 / 2.0, self.height as f64 / 2.0, self.width, self.height)
    }

    pub fn rough_params(&self) -> [f64; 2] {
        self.rough.unwrap_or([1.2 * self.s0, 1.2 * self.t0])
    }

    pub fn pose(&self, frame: usize) -> Result<Pose> {
        let (s, c) = self.heading_deg.to_radians().sin_cos();
        let d = frame as f64 * self.frame_step_m;
        let (x, y) = (d * s, d * c);
        let z = self.terrain.ground_height(x, y) + self.agl;
        Pose::looking(Vec3::new(x, y, z), self.heading_deg, self.pitch_deg, self.agl)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticFrame {
    pub id: String,
    pub pose: Pose,
    pub depth: DepthMap,
    pub ground: GroundMask,
    pub disparity: DisparityMap,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub intrinsics: Intrinsics,
    pub gdem: GdemCloud,
    pub frames: Vec<SyntheticFrame>,
}

pub fn frame_id(i: usize) -> String {
    format!("frame_{i:04}")
}

pub fn build_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    let k = spec.intrinsics()?;
    let mut frames = Vec::with_capacity(spec.n_frames);
    for i in 0..spec.n_frames {
        let pose = spec.pose(i)?;
        let view = render_view(&spec.terrain, &pose, &k)?;
        let disparity = make_relative_disparity(&view.depth, spec.s0, spec.t0, spec.disparity_noise, spec.seed.wrapping_add(1 + i as u64))?;
        frames.push(SyntheticFrame {
            id: frame_id(i),
            pose,
            depth: view.depth,
            ground: view.ground,
            disparity,
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = frames.iter().map(|f| (f.pose.position.x, f.pose.position.y)).unzip();
    let lo = |v: &[f64]| v.iter().copied().fold(0.0, f64::min) - spec.gdem_margin;
    let hi = |v: &[f64]| v.iter().copied().fold(0.0, f64::max) + spec.gdem_margin;
    let gdem = sample_synthetic_gdem(&spec.terrain, [lo(&xs), hi(&xs), lo(&ys), hi(&ys)], spec.gdem_spacing, spec.gdem_sigma, spec.seed)?;
    Ok(SyntheticScene {
        spec: spec.clone(),
        intrinsics: k,
        gdem,
        frames,
    })
}

/// File names inside a scene directory.
pub mod layout {
    pub const SPEC: &str = "scene.json";
    pub const INTRINSICS: &str = "intrinsics.json";
    pub const POSES: &str = "poses.jsonl";
    pub const GDEM: &str = "gdem.tdgd";
    pub const DISPARITY_DIR: &str = "disparity";
    pub const DEPTH_DIR: &str = "depth";
}

/// Write spec, intrinsics, poses (with AGL), raw GDEM, relative disparities
/// and reference depths under `dir`.
pub fn write_scene(dir: &Path, scene: &SyntheticScene) -> Result<()> {
    let mkdir = |p: &Path| fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    mkdir(&dir.join(layout::DISPARITY_DIR))?;
    mkdir(&dir.join(layout::DEPTH_DIR))?;
    write_json(&dir.join(layout::SPEC), &scene.spec)?;
    write_json(&dir.join(layout::INTRINSICS), &scene.intrinsics)?;

    let poses_path = dir.join(layout::POSES);
    let mut lines = Vec::new();
    for f in &scene.frames {
        let rec = PoseRecord::from_pose(f.id.clone(), &f.pose, true);
        let line = serde_json::to_string(&rec).map_err(|source| Error::Json { path: poses_path.clone(), source })?;
        writeln!(lines, "{line}").map_err(|e| Error::io(&poses_path, e))?;
    }
    fs::write(&poses_path, lines).map_err(|e| Error::io(&poses_path, e))?;

    save_gdem(&scene.gdem, dir.join(layout::GDEM))?;
    for f in &scene.frames {
        pfm::save(dir.join(layout::DISPARITY_DIR).join(format!("{}.pfm", f.id)), &f.disparity)?;
        pfm::save(dir.join(layout::DEPTH_DIR).join(format!("{}.pfm", f.id)), &f.depth)?;
    }
    Ok(())
}

pub(crate) fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.into(), source })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
