//! Dense row-major rasters: depth, disparity, masks and sparse maps.
//!
//! Real-valued rasters mark invalid pixels with NaN in memory. Relative
//! disparities are signed, so 0 cannot serve as the marker here; file formats
//! translate NaN to 0 on write (see [`crate::pfm`]).

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Per-pixel metric depth (camera-frame Z, meters).
pub type DepthMap<T = f64> = Raster<T>;
/// Per-pixel disparity, relative or metric (1/m).
pub type DisparityMap<T = f64> = Raster<T>;
/// Boolean mask, `true` = ground.
pub type GroundMask = Raster<bool>;

impl<T: Copy> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                found: (data.len(), 1),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> T {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: T) {
        let i = self.index(u, v);
        self.data[i] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, v: usize) -> &[T] {
        &self.data[v * self.width..(v + 1) * self.width]
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    /// Pixels `(u, v, value)` in row-major order.
    pub fn zip_with<U: Copy, V: Copy>(&self, other: &Raster<U>, mut f: impl FnMut(T, U) -> V) -> Raster<V> {
        assert_eq!(self.dims(), other.dims(), "zip_with on rasters of different size");
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        let w = self.width;
        self.data.iter().enumerate().map(move |(i, &x)| (i % w, i / w, x))
    }

    pub fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: self.dims(),
            });
        }
        Ok(())
    }

    /// Nearest-neighbor resampling to `width × height`.
    ///
    /// Target pixel `u'` reads source pixel `round(u' · W / width)`, so a
    /// downscale by an integer factor is plain stride sampling. Pair with
    /// [`crate::camera::Intrinsics::resized`] to keep the camera model exact.
    pub fn resample_nearest(&self, width: usize, height: usize) -> Self {
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        Self::from_fn(width, height, |u, v| {
            let su = ((u as f64 * sx).round() as usize).min(self.width - 1);
            let sv = ((v as f64 * sy).round() as usize).min(self.height - 1);
            self.get(su, sv)
        })
    }
}

impl<T: Real> Raster<T> {
    pub fn invalid(width: usize, height: usize) -> Self {
        Self::filled(width, height, T::nan())
    }

    /// Number of finite pixels.
    pub fn count_valid(&self) -> usize {
        self.data.iter().filter(|x| x.is_finite()).count()
    }

    pub fn cast<U: Real>(&self) -> Raster<U> {
        self.map(|x| U::lit(x.as_f64()))
    }

    /// Element-wise inverse; non-positive or non-finite inputs become invalid.
    /// Converts depth to metric disparity and back.
    pub fn reciprocal(&self) -> Self {
        self.map(|x| if x.is_finite() && x > T::zero() { T::one() / x } else { T::nan() })
    }
}

/// A depth pixel is valid when finite and strictly positive.
#[inline]
pub fn valid_depth<T: Real>(z: T) -> bool {
    z.is_finite() && z > T::zero()
}

/// Intersection-over-union of the `true` sets of two masks.
pub fn mask_iou(a: &GroundMask, b: &GroundMask) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_layout() {
        let r = Raster::from_fn(3, 2, |u, v| (u + 10 * v) as f64);
        assert_eq!(r.get(2, 1), 12.0);
        assert_eq!(r.row(1), &[10.0, 11.0, 12.0]);
        let px: Vec<_> = r.pixels().map(|(u, v, _)| (u, v)).collect();
        assert_eq!(px[4], (1, 1));
    }

    #[test]
    fn stride_downsample() {
        let r = Raster::from_fn(8, 4, |u, v| (u, v));
        let d = r.resample_nearest(4, 2);
        assert_eq!(d.get(1, 1), (2, 2));
        assert_eq!(d.get(3, 0), (6, 0));
    }

    #[test]
    fn reciprocal_marks_invalid() {
        let r = Raster::from_vec(3, 1, vec![2.0f64, 0.0, -1.0]).unwrap();
        let inv = r.reciprocal();
        assert_eq!(inv.get(0, 0), 0.5);
        assert!(inv.get(1, 0).is_nan() && inv.get(2, 0).is_nan());
    }

    #[test]
    fn from_vec_checks_len() {
        assert!(Raster::from_vec(2, 2, vec![0.0; 3]).is_err());
    }
}
