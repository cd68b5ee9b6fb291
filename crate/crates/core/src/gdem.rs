//! Terrain point clouds: 2.5D Delaunay triangulation, surface densification
//! and the `TDGD` binary format.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use spade::{DelaunayTriangulation, Point2, Triangulation};

use crate::error::{Error, Result};
use crate::geodesy::LocalMetricPoint;
use crate::geom::Vec3;
use crate::scalar::Real;

/// Default densification density, points per m².
pub const DEFAULT_DENSITY: f64 = 0.05;

const MAGIC: &[u8; 4] = b"TDGD";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Raw,
    Densified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdemCloud<T = f64> {
    pub points: Vec<LocalMetricPoint<T>>,
    /// Set once the cloud has been densified.
    pub density_pts_per_m2: Option<T>,
    pub source: SourceTag,
    /// RNG seed used for densification, 0 for raw clouds.
    pub seed: u64,
}

impl<T: Real> GdemCloud<T> {
    pub fn raw(points: Vec<LocalMetricPoint<T>>) -> Result<Self> {
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::DegenerateTerrain("non-finite GDEM coordinate".into()));
        }
        Ok(Self {
            points,
            density_pts_per_m2: None,
            source: SourceTag::Raw,
            seed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Triangle mesh over the XY projection of the terrain samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangulatedSurface<T = f64> {
    pub vertices: Vec<LocalMetricPoint<T>>,
    pub triangles: Vec<[usize; 3]>,
}

impl<T: Real> TriangulatedSurface<T> {
    /// Unsigned XY area of triangle `i`.
    pub fn triangle_area(&self, i: usize) -> T {
        let [a, b, c] = self.triangles[i].map(|j| self.vertices[j]);
        ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y)).abs() / T::lit(2.0)
    }

    pub fn total_area(&self) -> T {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }
}

/// Delaunay triangulation of the XY projections; z rides along per vertex.
/// Duplicate XY positions keep the first occurrence.
pub fn triangulate_2_5d<T: Real>(raw: &GdemCloud<T>) -> Result<TriangulatedSurface<T>> {
    if raw.points.len() < 3 {
        return Err(Error::DegenerateTerrain(format!("{} points, need at least 3", raw.points.len())));
    }
    let mut dt: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
    let mut vertices = Vec::with_capacity(raw.points.len());
    for p in &raw.points {
        let handle = dt
            .insert(Point2::new(p.x.as_f64(), p.y.as_f64()))
            .map_err(|e| Error::DegenerateTerrain(format!("insertion failed: {e:?}")))?;
        if handle.index() == vertices.len() {
            vertices.push(*p);
        }
    }
    let triangles: Vec<[usize; 3]> = dt
        .inner_faces()
        .map(|f| f.vertices().map(|v| v.fix().index()))
        .collect();
    if triangles.is_empty() {
        return Err(Error::DegenerateTerrain("all points are collinear".into()));
    }
    Ok(TriangulatedSurface { vertices, triangles })
}

/// Sample a denser cloud off the surface: triangles are picked with
/// probability proportional to XY area, points are uniform within each
/// triangle. The point count is `round(area · density)`.
pub fn densify<T: Real>(surface: &TriangulatedSurface<T>, density: T, seed: u64) -> Result<GdemCloud<T>> {
    if !(density > T::zero()) {
        return Err(Error::Config(format!("density must be positive, got {density}")));
    }
    let mut cumulative = Vec::with_capacity(surface.triangles.len());
    let mut total = 0.0f64;
    for i in 0..surface.triangles.len() {
        total += surface.triangle_area(i).as_f64();
        cumulative.push(total);
    }
    let expected = total * density.as_f64();
    if expected < 1.0 {
        return Err(Error::EmptyDensification { expected });
    }
    let count = expected.round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let pick = rng.gen::<f64>() * total;
        let tri = cumulative.partition_point(|&c| c <= pick).min(cumulative.len() - 1);
        let [a, b, c] = surface.triangles[tri].map(|j| surface.vertices[j].cast::<f64>());
        let (mut r1, mut r2): (f64, f64) = (rng.gen(), rng.gen());
        if r1 + r2 > 1.0 {
            r1 = 1.0 - r1;
            r2 = 1.0 - r2;
        }
        let p = a + (b - a) * r1 + (c - a) * r2;
        points.push(p.cast::<T>());
    }
    Ok(GdemCloud {
        points,
        density_pts_per_m2: Some(density),
        source: SourceTag::Densified,
        seed,
    })
}

pub fn encode<T: Real>(cloud: &GdemCloud<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + cloud.points.len() * 24);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&cloud.seed.to_le_bytes());
    let density = cloud.density_pts_per_m2.map_or(0.0, T::as_f64);
    out.extend_from_slice(&density.to_le_bytes());
    out.extend_from_slice(&(cloud.points.len() as u64).to_le_bytes());
    for p in &cloud.points {
        for c in [p.x, p.y, p.z] {
            out.extend_from_slice(&c.as_f64().to_le_bytes());
        }
    }
    out
}

pub fn decode<T: Real>(bytes: &[u8]) -> Result<GdemCloud<T>> {
    let err = |offset: usize, reason: String| Error::Format {
        offset: offset as u64,
        reason,
    };
    let take8 = |at: usize| -> Result<[u8; 8]> {
        bytes
            .get(at..at + 8)
            .map(|s| s.try_into().expect("8 bytes"))
            .ok_or_else(|| err(bytes.len(), "truncated header".into()))
    };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(err(0, "bad magic, expected TDGD".into()));
    }
    let version = u32::from_le_bytes(
        bytes
            .get(4..8)
            .ok_or_else(|| err(bytes.len(), "truncated header".into()))?
            .try_into()
            .expect("4 bytes"),
    );
    if version != VERSION {
        return Err(err(4, format!("unsupported version {version}")));
    }
    let seed = u64::from_le_bytes(take8(8)?);
    let density = f64::from_le_bytes(take8(16)?);
    if !density.is_finite() || density < 0.0 {
        return Err(err(16, format!("bad density {density}")));
    }
    let count = u64::from_le_bytes(take8(24)?);
    let available = (bytes.len() - HEADER_LEN) / 24;
    if count > available as u64 || (bytes.len() - HEADER_LEN) % 24 != 0 || count < available as u64 {
        return Err(err(
            24,
            format!("count field says {count} points, payload holds {} bytes", bytes.len() - HEADER_LEN),
        ));
    }
    let mut points = Vec::with_capacity(count as usize);
    for i in 0..count as usize {
        let at = HEADER_LEN + i * 24;
        let mut c = [0f64; 3];
        for (j, slot) in c.iter_mut().enumerate() {
            *slot = f64::from_le_bytes(take8(at + j * 8)?);
            if !slot.is_finite() {
                return Err(err(at + j * 8, "non-finite coordinate".into()));
            }
        }
        points.push(Vec3::new(T::lit(c[0]), T::lit(c[1]), T::lit(c[2])));
    }
    let densified = density > 0.0;
    Ok(GdemCloud {
        points,
        density_pts_per_m2: densified.then(|| T::lit(density)),
        source: if densified { SourceTag::Densified } else { SourceTag::Raw },
        seed,
    })
}

pub fn save_gdem<T: Real>(cloud: &GdemCloud<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(cloud)).map_err(|e| Error::io(path, e))
}

pub fn load_gdem<T: Real>(path: impl AsRef<Path>) -> Result<GdemCloud<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
