//! Cloth Simulation Filter.
//!
//! The cloud is flipped upside down and a grid of particles falls onto it
//! under gravity. Particles freeze when they reach the height of their
//! supporting point; spring constraints between grid neighbours keep the
//! cloth from sagging into the pits that non-ground objects leave in the
//! inverted scene. Points close to the final cloth are ground.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::scalar::Real;

const DAMPING: f64 = 0.01;
/// Fraction of the remaining gap closed by one constraint pass.
const PASS_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsfParams<T = f64> {
    /// Grid spacing, length units of the cloud.
    pub cloth_resolution: T,
    /// Max point-to-cloth distance for a ground label.
    pub class_threshold: T,
    /// 1 (soft) to 3 (stiff).
    pub rigidity: u8,
    pub time_step: T,
    /// Gravity on a unit-mass particle. The force is pre-scaled by
    /// `time_step²` and integrated with another `time_step²`, so each step
    /// adds `gravity · time_step⁴` of downward displacement.
    pub gravity: T,
    pub max_iterations: usize,
    /// Stop once no particle moves more than this in a step.
    pub stop_epsilon: T,
}

impl<T: Real> Default for CsfParams<T> {
    fn default() -> Self {
        Self {
            cloth_resolution: T::lit(1.5),
            class_threshold: T::lit(0.5),
            rigidity: 1,
            time_step: T::lit(0.65),
            gravity: T::lit(0.2),
            max_iterations: 500,
            stop_epsilon: T::lit(0.005),
        }
    }
}

impl<T: Real> CsfParams<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: T| x > T::zero() && x.is_finite();
        if !positive(self.cloth_resolution)
            || !positive(self.class_threshold)
            || !positive(self.time_step)
            || !positive(self.gravity)
            || !(self.stop_epsilon >= T::zero())
            || !(1..=3).contains(&self.rigidity)
            || self.max_iterations == 0
        {
            return Err(Error::CsfFailed(format!("invalid parameters {self:?}")));
        }
        Ok(())
    }

    /// Multiply every length-valued parameter by `factor`.
    pub fn scale_lengths(&self, factor: T) -> Self {
        Self {
            cloth_resolution: self.cloth_resolution * factor,
            class_threshold: self.class_threshold * factor,
            gravity: self.gravity * factor,
            stop_epsilon: self.stop_epsilon * factor,
            ..*self
        }
    }

    /// Displacement factors for a neighbour pair: (both movable, one movable).
    /// Closed form of `rigidity` passes that each close 30% of the gap.
    fn constraint_factors(&self) -> (T, T) {
        let r = self.rigidity as i32;
        let single = 1.0 - (1.0 - PASS_FRACTION).powi(r);
        let double = 0.5 * (1.0 - (1.0 - 2.0 * PASS_FRACTION).powi(r));
        (T::lit(double), T::lit(single))
    }
}

/// Particle grid over an inverted cloud. Heights are along the inverted
/// vertical axis, so the cloth falls towards smaller values.
#[derive(Debug, Clone)]
pub struct Cloth<T = f64> {
    nx: usize,
    ny: usize,
    origin: (T, T),
    params: CsfParams<T>,
    pos: Vec<T>,
    old: Vec<T>,
    movable: Vec<bool>,
    /// Height of the supporting point under each particle.
    support: Vec<T>,
}

impl<T: Real> Cloth<T> {
    /// Build a cloth over `inverted` points (z already flipped).
    pub fn new(inverted: &[Vec3<T>], params: CsfParams<T>) -> Result<Self> {
        params.validate()?;
        if inverted.is_empty() {
            return Err(Error::CsfFailed("empty point cloud".into()));
        }
        if inverted.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidCloud);
        }
        let (mut min_x, mut min_y, mut max_x, mut max_y, mut max_z) =
            (T::infinity(), T::infinity(), T::neg_infinity(), T::neg_infinity(), T::neg_infinity());
        for p in inverted {
            min_x = min_x.min(p.x);
            min_y = min_y.min(p.y);
            max_x = max_x.max(p.x);
            max_y = max_y.max(p.y);
            max_z = max_z.max(p.z);
        }
        let res = params.cloth_resolution;
        let pad = T::lit(2.0);
        let cells = |lo: T, hi: T| ((hi - lo) / res).floor().to_usize().unwrap_or(0) + 1 + 4;
        let (nx, ny) = (cells(min_x, max_x), cells(min_y, max_y));
        let n = nx
            .checked_mul(ny)
            .filter(|&n| n <= 50_000_000)
            .ok_or_else(|| Error::CsfFailed(format!("cloth grid {nx}×{ny} too large")))?;
        let origin = (min_x - pad * res, min_y - pad * res);

        // nearest point per particle
        let mut support = vec![T::nan(); n];
        let mut best_d2 = vec![T::infinity(); n];
        for p in inverted {
            let gx = ((p.x - origin.0) / res).round().to_usize().unwrap_or(0).min(nx - 1);
            let gy = ((p.y - origin.1) / res).round().to_usize().unwrap_or(0).min(ny - 1);
            let i = gy * nx + gx;
            let dx = p.x - (origin.0 + T::from_usize_lossy(gx) * res);
            let dy = p.y - (origin.1 + T::from_usize_lossy(gy) * res);
            let d2 = dx * dx + dy * dy;
            if d2 < best_d2[i] {
                best_d2[i] = d2;
                support[i] = p.z;
            }
        }
        fill_from_nearest(&mut support, nx, ny);

        let start = max_z + res;
        Ok(Self {
            nx,
            ny,
            origin,
            params,
            pos: vec![start; n],
            old: vec![start; n],
            movable: vec![true; n],
            support,
        })
    }

    pub fn grid_size(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn heights(&self) -> &[T] {
        &self.pos
    }

    pub fn movable(&self) -> &[bool] {
        &self.movable
    }

    pub fn any_movable(&self) -> bool {
        self.movable.iter().any(|&m| m)
    }

    /// One simulation step: gravity, springs, collision. Returns the largest
    /// displacement of a movable particle.
    pub fn step(&mut self) -> T {
        let damp = T::one() - T::lit(DAMPING);
        let dt2 = self.params.time_step * self.params.time_step;
        let g = self.params.gravity * dt2 * dt2;
        for i in 0..self.pos.len() {
            if self.movable[i] {
                let cur = self.pos[i];
                self.pos[i] = cur + (cur - self.old[i]) * damp - g;
                self.old[i] = cur;
            }
        }

        let (double, single) = self.params.constraint_factors();
        let (nx, ny) = (self.nx, self.ny);
        for y in 0..ny {
            for x in 0..nx {
                let i = y * nx + x;
                let neighbours = [
                    (x > 0).then(|| i - 1),
                    (x + 1 < nx).then(|| i + 1),
                    (y > 0).then(|| i - nx),
                    (y + 1 < ny).then(|| i + nx),
                ];
                for j in neighbours.into_iter().flatten() {
                    let gap = self.pos[j] - self.pos[i];
                    match (self.movable[i], self.movable[j]) {
                        (true, true) => {
                            self.pos[i] = self.pos[i] + gap * double;
                            self.pos[j] = self.pos[j] - gap * double;
                        }
                        (true, false) => self.pos[i] = self.pos[i] + gap * single,
                        (false, true) => self.pos[j] = self.pos[j] - gap * single,
                        (false, false) => {}
                    }
                }
            }
        }

        let mut max_diff = T::zero();
        for i in 0..self.pos.len() {
            if self.movable[i] {
                max_diff = max_diff.max((self.pos[i] - self.old[i]).abs());
                if self.pos[i] < self.support[i] {
                    self.pos[i] = self.support[i];
                    self.movable[i] = false;
                }
            }
        }
        max_diff
    }

    /// Run until converged, frozen, or out of iterations. Returns the number
    /// of steps taken.
    pub fn simulate(&mut self) -> usize {
        for it in 0..self.params.max_iterations {
            let diff = self.step();
            if !self.any_movable() || diff < self.params.stop_epsilon {
                return it + 1;
            }
        }
        self.params.max_iterations
    }

    /// Cloth height at `(x, y)` by bilinear interpolation.
    pub fn height_at(&self, x: T, y: T) -> T {
        let res = self.params.cloth_resolution;
        let fx = ((x - self.origin.0) / res).max(T::zero());
        let fy = ((y - self.origin.1) / res).max(T::zero());
        let x0 = fx.floor().to_usize().unwrap_or(0).min(self.nx - 2);
        let y0 = fy.floor().to_usize().unwrap_or(0).min(self.ny - 2);
        let tx = (fx - T::from_usize_lossy(x0)).min(T::one());
        let ty = (fy - T::from_usize_lossy(y0)).min(T::one());
        let h = |cx: usize, cy: usize| self.pos[cy * self.nx + cx];
        let top = h(x0, y0) * (T::one() - tx) + h(x0 + 1, y0) * tx;
        let bottom = h(x0, y0 + 1) * (T::one() - tx) + h(x0 + 1, y0 + 1) * tx;
        top * (T::one() - ty) + bottom * ty
    }
}

/// Assign every empty cell the support of its nearest filled cell
/// (4-connected breadth-first order).
fn fill_from_nearest<T: Real>(support: &mut [T], nx: usize, ny: usize) {
    let mut queue: VecDeque<usize> = (0..support.len()).filter(|&i| support[i].is_finite()).collect();
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % nx, i / nx);
        let neighbours = [
            (x > 0).then(|| i - 1),
            (x + 1 < nx).then(|| i + 1),
            (y > 0).then(|| i - nx),
            (y + 1 < ny).then(|| i + nx),
        ];
        for j in neighbours.into_iter().flatten() {
            if support[j].is_nan() {
                support[j] = support[i];
                queue.push_back(j);
            }
        }
    }
}

/// Label each point of an upright cloud (z up) as ground (`true`) or not.
pub fn csf_classify<T: Real>(points: &[Vec3<T>], params: &CsfParams<T>) -> Result<Vec<bool>> {
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidCloud);
    }
    let inverted: Vec<Vec3<T>> = points.iter().map(|p| Vec3::new(p.x, p.y, -p.z)).collect();
    let mut cloth = Cloth::new(&inverted, *params)?;
    cloth.simulate();
    Ok(inverted
        .iter()
        .map(|p| (cloth.height_at(p.x, p.y) - p.z).abs() < params.class_threshold)
        .collect())
}
