//! Implicit shapes (negative inside) and octree cell-moment initialization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Grid, MaterialField};
use crate::geom::Vec3;

/// Subdivision levels per cell when initializing a field.
pub const INIT_DEPTH: u32 = 6;

/// Shapes described by a 1-Lipschitz implicit function that is negative
/// inside, which lets the octree discard boxes farther than their
/// half-diagonal from the surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Shape {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    /// Sphere with a slot of full height in `z`, centered on the sphere's
    /// `x` and rising `depth` from its lowest `y`.
    NotchedSphere {
        center: [f64; 3],
        radius: f64,
        slot_width: f64,
        slot_depth: f64,
    },
    Box {
        lo: [f64; 3],
        hi: [f64; 3],
    },
    /// The whole domain.
    Everything,
    /// Another shape shifted by `offset` on the periodic unit domain. The
    /// inner shape must keep clear of the domain boundary.
    Shifted {
        shape: std::boxed::Box<Shape>,
        offset: [f64; 3],
    },
}

fn box_sdf(p: &Vec3, lo: &Vec3, hi: &Vec3) -> f64 {
    let c = (lo + hi) * 0.5;
    let half = (hi - lo) * 0.5;
    let q = (p - c).abs() - half;
    let outside = q.map(|v| v.max(0.0)).norm();
    let inside = q.x.max(q.y).max(q.z).min(0.0);
    outside + inside
}

impl Shape {
    pub fn sphere(center: Vec3, radius: f64) -> Self {
        Shape::Sphere {
            center: center.into(),
            radius,
        }
    }

    /// The slotted sphere used for the rotation benchmark.
    pub fn zalesak_sphere() -> Self {
        Shape::NotchedSphere {
            center: [0.5, 0.75, 0.5],
            radius: 0.15,
            slot_width: 0.05,
            slot_depth: 0.25,
        }
    }

    pub fn shifted(self, offset: Vec3) -> Self {
        Shape::Shifted {
            shape: std::boxed::Box::new(self),
            offset: offset.map(|v| v.rem_euclid(1.0)).into(),
        }
    }

    pub fn sdf(&self, p: &Vec3) -> f64 {
        match self {
            Shape::Sphere { center, radius } => (p - Vec3::from(*center)).norm() - radius,
            Shape::NotchedSphere {
                center,
                radius,
                slot_width,
                slot_depth,
            } => {
                let c = Vec3::from(*center);
                let sphere = (p - c).norm() - radius;
                let bottom = c.y - radius;
                let lo = Vec3::new(c.x - 0.5 * slot_width, bottom - 1.0, -1.0);
                let hi = Vec3::new(c.x + 0.5 * slot_width, bottom + slot_depth, 2.0);
                sphere.max(-box_sdf(p, &lo, &hi))
            }
            Shape::Box { lo, hi } => box_sdf(p, &Vec3::from(*lo), &Vec3::from(*hi)),
            Shape::Everything => -1.0,
            Shape::Shifted { shape, offset } => {
                let q = p - Vec3::from(*offset);
                shape.sdf(&q.map(|v| if (0.0..1.0).contains(&v) { v } else { v.rem_euclid(1.0) }))
            }
        }
    }

    /// Shape volume when it is known in closed form.
    pub fn exact_volume(&self) -> Option<f64> {
        match self {
            Shape::Sphere { radius, .. } => Some(4.0 / 3.0 * std::f64::consts::PI * radius.powi(3)),
            Shape::Box { lo, hi } => Some((0..3).map(|d| hi[d] - lo[d]).product()),
            Shape::Everything => Some(1.0),
            Shape::Shifted { shape, .. } => shape.exact_volume(),
            Shape::NotchedSphere { .. } => None,
        }
    }
}

/// Volume and first moment of `shape` inside the box `[lo, lo + size]³`,
/// by midpoint classification of `2^depth` subdivisions per axis.
fn box_moments(shape: &Shape, lo: Vec3, size: f64, depth: u32) -> (f64, Vec3) {
    let center = lo.add_scalar(0.5 * size);
    let phi = shape.sdf(&center);
    let half_diag = 0.5 * size * 3f64.sqrt();
    let vol = size * size * size;
    if phi <= -half_diag || (depth == 0 && phi <= 0.0) {
        return (vol, center * vol);
    }
    if phi >= half_diag || depth == 0 {
        return (0.0, Vec3::zeros());
    }
    let s = 0.5 * size;
    let mut v = 0.0;
    let mut m = Vec3::zeros();
    for k in 0..8 {
        let off = Vec3::new((k & 1) as f64, ((k >> 1) & 1) as f64, ((k >> 2) & 1) as f64) * s;
        let (cv, cm) = box_moments(shape, lo + off, s, depth - 1);
        v += cv;
        m += cm;
    }
    (v, m)
}

/// Per-cell volume fraction and centroid of `shape`.
pub fn init_field(grid: &Grid, shape: &Shape) -> MaterialField {
    init_field_with_depth(grid, shape, INIT_DEPTH)
}

pub fn init_field_with_depth(grid: &Grid, shape: &Shape, depth: u32) -> MaterialField {
    let h = grid.h;
    let cells: Vec<(f64, Vec3)> = (0..grid.cells())
        .into_par_iter()
        .map(|id| {
            let lo = grid.cell_lo(id);
            let center = lo.add_scalar(0.5 * h);
            let (v, m) = box_moments(shape, lo, h, depth);
            let frac = (v / (h * h * h)).min(1.0);
            let centroid = if v > 0.0 && frac < 1.0 { m / v } else { center };
            (frac, centroid)
        })
        .collect();
    let (vol, centroid) = cells.into_iter().unzip();
    MaterialField {
        grid: *grid,
        vol,
        centroid,
        time: 0.0,
    }
}
