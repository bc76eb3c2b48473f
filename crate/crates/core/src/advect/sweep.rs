//! One-dimensional flux sweeps. Work is done in each cell's unit-cube
//! coordinates, so volumes are fractions of `h³` and a face Courant number
//! `σ = u_f dt / h` is the width of the slab crossing that face.
//!
//! Per sweep along axis `d`, with `σ₋, σ₊` on the lower and upper faces:
//!
//! ```text
//! C' = C − out₋ − out₊ + in₋ + in₊ + c_c (σ₊ − σ₋)
//! ```
//!
//! where `c_c` is 1 for cells more than half full at the start of the step.
//! Summed over a full step the last term vanishes for a divergence-free
//! field, and each face's flux leaves one cell and enters the next, so the
//! total volume only changes by clipping.

use rayon::prelude::*;

use super::{AdvectError, Grid, MaterialField, Reconstructor, VelocityField};
use crate::geom::{alpha_range, plane_moments, Vec3};

/// Below this fraction a cell's material moves as a point mass.
pub const C_EMPTY: f64 = 1e-10;
/// Above this fraction a cell is treated as uniformly filled.
pub const C_FULL: f64 = 1.0 - 1e-10;
const CFL_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SweepStats {
    /// Volume (in `h³` units) added by raising negative fractions to zero.
    pub clipped_low: f64,
    /// Volume removed by lowering overfull fractions to one.
    pub clipped_high: f64,
    pub reconstructions: usize,
}

impl SweepStats {
    pub fn add(&mut self, o: &SweepStats) {
        self.clipped_low += o.clipped_low;
        self.clipped_high += o.clipped_high;
        self.reconstructions += o.reconstructions;
    }

    /// Net volume change from clipping, in `h³` units.
    pub fn net_clipped(&self) -> f64 {
        self.clipped_low - self.clipped_high
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Part {
    v: f64,
    c: Vec3,
}

#[derive(Clone, Copy, Debug, Default)]
struct Outflow {
    lower: Part,
    upper: Part,
    reconstructed: bool,
}

/// Spatial face-averaged velocities, scaled by the field's time factor at
/// each step.
#[derive(Clone, Debug)]
pub struct FaceVelocities {
    /// `base[d][id]`: velocity through the lower `d`-face of cell `id`.
    base: [Vec<f64>; 3],
}

impl FaceVelocities {
    pub fn new(v: &VelocityField, grid: &Grid) -> Self {
        let faces = |axis: usize| -> Vec<f64> {
            (0..grid.cells())
                .into_par_iter()
                .map(|id| v.face_average(axis, &grid.cell_lo(id), grid.h, 0.0))
                .collect()
        };
        Self {
            base: [faces(0), faces(1), faces(2)],
        }
    }

    pub fn lower(&self, axis: usize) -> &[f64] {
        &self.base[axis]
    }
}

fn slab(axis: usize, from: f64, to: f64) -> (Vec3, Vec3) {
    let mut lo = Vec3::zeros();
    let mut hi = Vec3::repeat(1.0);
    lo[axis] = from;
    hi[axis] = to;
    (lo, hi)
}

fn slab_center(axis: usize, from: f64, to: f64) -> Vec3 {
    let (lo, hi) = slab(axis, from, to);
    (lo + hi) * 0.5
}

/// Volume and first moment of `{n·x <= alpha}` inside the slab
/// `from <= x[axis] <= to` of the unit cube.
fn slab_moments(n: &Vec3, alpha: f64, axis: usize, from: f64, to: f64) -> (f64, Vec3) {
    let w = to - from;
    let mut scaled = *n;
    scaled[axis] *= w;
    let shifted = alpha - n[axis] * from;
    let (lo, hi) = alpha_range(&scaled);
    if shifted <= lo {
        return (0.0, Vec3::zeros());
    }
    let (v, mut m) = if shifted >= hi {
        (1.0, Vec3::new(0.5, 0.5, 0.5))
    } else {
        plane_moments(&scaled, shifted)
    };
    m[axis] = from * v + w * m[axis];
    (v * w, m * w)
}

/// Material leaving a cell through its lower and upper faces.
fn outflow(
    vol: f64,
    c: Vec3,
    s_lo: f64,
    s_hi: f64,
    axis: usize,
    rec: &Reconstructor,
) -> Result<Outflow, AdvectError> {
    let w_lo = (-s_lo).max(0.0);
    let w_hi = s_hi.max(0.0);
    let mut out = Outflow::default();
    if vol <= 0.0 || (w_lo == 0.0 && w_hi == 0.0) {
        return Ok(out);
    }
    if vol < C_EMPTY {
        if w_hi > 0.0 && c[axis] >= 1.0 - w_hi {
            out.upper = Part { v: vol, c };
        } else if w_lo > 0.0 && c[axis] <= w_lo {
            out.lower = Part { v: vol, c };
        }
        return Ok(out);
    }
    if vol >= C_FULL {
        if w_lo > 0.0 {
            out.lower = Part {
                v: vol * w_lo.min(1.0),
                c: slab_center(axis, 0.0, w_lo.min(1.0)),
            };
        }
        if w_hi > 0.0 {
            let from = (1.0 - w_hi).max(0.0);
            out.upper = Part {
                v: vol * (1.0 - from),
                c: slab_center(axis, from, 1.0),
            };
        }
        return Ok(out);
    }

    let whole = Part { v: vol, c };
    if w_lo >= 1.0 {
        out.lower = whole;
        return Ok(out);
    }
    if w_hi >= 1.0 {
        out.upper = whole;
        return Ok(out);
    }
    let plane = rec.reconstruct(&c, vol)?;
    out.reconstructed = true;
    let cut = |from: f64, to: f64| -> Part {
        let (lo, hi) = slab(axis, from, to);
        let (v, m) = slab_moments(&plane.normal, plane.alpha, axis, from, to);
        if v > 0.0 {
            Part { v, c: m / v }
        } else {
            Part {
                v: 0.0,
                c: (lo + hi) * 0.5,
            }
        }
    };
    if w_lo > 0.0 {
        out.lower = cut(0.0, w_lo);
    }
    if w_hi > 0.0 {
        out.upper = cut(1.0 - w_hi, 1.0);
    }
    Ok(out)
}

/// Advance one directional sweep. `sigma[id]` is the Courant number on the
/// lower `axis`-face of cell `id`; `dilate[id]` selects the cells carrying
/// the divergence correction.
pub fn sweep(
    field: &mut MaterialField,
    sigma: &[f64],
    axis: usize,
    dilate: &[bool],
    rec: &Reconstructor,
) -> Result<SweepStats, AdvectError> {
    let grid = field.grid;
    let upper = |id: usize| grid.neighbor(id, axis, true);
    for id in 0..grid.cells() {
        let (lo, hi) = (sigma[id], sigma[upper(id)]);
        let width = (-lo).max(0.0) + hi.max(0.0);
        if lo.abs() > 1.0 + CFL_SLACK || width > 1.0 + CFL_SLACK {
            return Err(AdvectError::Cfl(lo.abs().max(width)));
        }
    }

    let locals: Vec<Vec3> = (0..grid.cells()).map(|id| field.local_centroid(id)).collect();
    let outs: Vec<Outflow> = (0..grid.cells())
        .into_par_iter()
        .map(|id| outflow(field.vol[id], locals[id], sigma[id], sigma[upper(id)], axis, rec))
        .collect::<Result<_, _>>()?;

    let mut e = Vec3::zeros();
    e[axis] = 1.0;
    let updated: Vec<(f64, Option<Vec3>, f64)> = (0..grid.cells())
        .into_par_iter()
        .map(|id| {
            let (s_lo, s_hi) = (sigma[id], sigma[upper(id)]);
            let vol = field.vol[id];
            let out = &outs[id];
            let inflow_lo = if s_lo > 0.0 {
                let p = outs[grid.neighbor(id, axis, false)].upper;
                Part {
                    v: p.v,
                    c: p.c + e * (s_lo - 1.0),
                }
            } else {
                Part::default()
            };
            let inflow_hi = if s_hi < 0.0 {
                let p = outs[upper(id)].lower;
                Part {
                    v: p.v,
                    c: p.c + e * (s_hi + 1.0),
                }
            } else {
                Part::default()
            };
            let dil = if dilate[id] { s_hi - s_lo } else { 0.0 };

            if out.lower.v == 0.0 && out.upper.v == 0.0 && inflow_lo.v == 0.0 && inflow_hi.v == 0.0 {
                // material (if any) stays and moves with the local velocity
                if s_lo == 0.0 && s_hi == 0.0 {
                    return (vol, None, 0.0);
                }
                let mut c = locals[id];
                c[axis] += s_lo + (s_hi - s_lo) * c[axis];
                return (vol + dil, Some(c), 0.0);
            }

            let stay_v = vol - out.lower.v - out.upper.v;
            let mut stay = Part { v: stay_v, c: locals[id] };
            if (out.lower.v > 0.0 || out.upper.v > 0.0)
                && stay_v > 0.0 {
                    stay.c = (locals[id] * vol - out.lower.c * out.lower.v - out.upper.c * out.upper.v) / stay_v;
                }
            stay.c[axis] += s_lo + (s_hi - s_lo) * stay.c[axis];

            let parts = [stay, inflow_lo, inflow_hi];
            let total: f64 = parts.iter().map(|p| p.v).sum::<f64>() + dil;
            let positive: Vec<&Part> = parts.iter().filter(|p| p.v > 0.0).collect();
            let c = match positive.as_slice() {
                [] => Vec3::repeat(0.5),
                [only] => only.c,
                many => {
                    let w: f64 = many.iter().map(|p| p.v).sum();
                    many.iter().fold(Vec3::zeros(), |acc, p| acc + p.c * p.v) / w
                }
            };
            (total, Some(c), out.reconstructed as u8 as f64)
        })
        .collect();

    let mut stats = SweepStats::default();
    for (id, (v, c, rec_flag)) in updated.into_iter().enumerate() {
        stats.reconstructions += rec_flag as usize;
        let mut v = v;
        if v < 0.0 {
            stats.clipped_low -= v;
            v = 0.0;
        } else if v > 1.0 {
            stats.clipped_high += v - 1.0;
            v = 1.0;
        }
        field.vol[id] = v;
        if let Some(c) = c {
            field.centroid[id] = if v <= 0.0 || v >= 1.0 {
                grid.cell_center(id)
            } else {
                grid.cell_lo(id) + c.map(|x| x.clamp(0.0, 1.0)) * grid.h
            };
        }
    }
    Ok(stats)
}

/// One time step: three sweeps using face velocities at the step midpoint,
/// in `x, y, z` order when `forward` and `z, y, x` otherwise.
pub fn step(
    field: &mut MaterialField,
    velocity: &VelocityField,
    faces: &FaceVelocities,
    dt: f64,
    forward: bool,
    rec: &Reconstructor,
) -> Result<SweepStats, AdvectError> {
    let grid = field.grid;
    let factor = velocity.time_factor(field.time + 0.5 * dt);
    let scale = factor * dt / grid.h;
    let dilate: Vec<bool> = field.vol.iter().map(|&c| c > 0.5).collect();
    let order: [usize; 3] = if forward { [0, 1, 2] } else { [2, 1, 0] };
    let mut stats = SweepStats::default();
    for axis in order {
        let sigma: Vec<f64> = faces.lower(axis).iter().map(|u| u * scale).collect();
        stats.add(&sweep(field, &sigma, axis, &dilate, rec)?);
    }
    field.time += dt;
    Ok(stats)
}
