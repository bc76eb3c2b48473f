//! Plane cuts of the unit cube.
//!
//! The material region of a cut is `{x ∈ [0,1]³ : n·x <= alpha}` with the
//! offset measured from the cube's lower corner. Rectangular cells are mapped
//! onto the unit cube by the caller.

pub mod polyhedron;

use std::f64::consts::PI;

use thiserror::Error;

pub use polyhedron::{Face, HalfSpace, Polyhedron};

pub type Vec3 = nalgebra::Vector3<f64>;

/// Cell center of the unit cube.
pub const CELL_CENTER: Vec3 = Vec3::new(0.5, 0.5, 0.5);

/// Volume fraction tolerance of [`alpha_from_volume`].
pub const ALPHA_SOLVE_TOL: f64 = 1e-12;
const ALPHA_SOLVE_MAX_ITER: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("degenerate normal")]
    DegenerateNormal,
    #[error("volume fraction {0} outside [0, 1]")]
    VolumeOutOfRange(f64),
}

/// Polar/azimuthal angles of a unit normal.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct AnglePair {
    /// Polar angle from +z, in `[0, π]`.
    pub phi: f64,
    /// Azimuth from +x, in `[-π, π]`.
    pub theta: f64,
}

impl AnglePair {
    pub const fn new(phi: f64, theta: f64) -> Self {
        Self { phi, theta }
    }

    /// Fold arbitrary angles back into `[0, π] × [-π, π]` describing the
    /// same direction.
    pub fn wrapped(phi: f64, theta: f64) -> Self {
        let mut phi = phi.rem_euclid(2.0 * PI);
        let mut theta = theta;
        if phi > PI {
            phi = 2.0 * PI - phi;
            theta += PI;
        }
        Self {
            phi,
            theta: wrap_angle(theta),
        }
    }

    pub fn normal(&self) -> Vec3 {
        normal_from_angles(*self)
    }

    pub fn antipode(&self) -> Self {
        Self::wrapped(PI - self.phi, self.theta + PI)
    }
}

/// Wrap an angle into `[-π, π]`.
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    if (-PI..=PI).contains(&a) {
        a
    } else {
        let w = a - 2.0 * PI * (a / (2.0 * PI)).round();
        w.clamp(-PI, PI)
    }
}

/// Wrap an angle difference into `(-π, π]`.
#[inline]
pub fn wrap_difference(a: f64) -> f64 {
    let w = wrap_angle(a);
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

#[inline]
pub fn normal_from_angles(a: AnglePair) -> Vec3 {
    let (sp, cp) = a.phi.sin_cos();
    let (st, ct) = a.theta.sin_cos();
    Vec3::new(sp * ct, sp * st, cp)
}

/// Inverse of [`normal_from_angles`]; the azimuth is 0 on the poles.
pub fn angles_from_normal(n: &Vec3) -> Result<AnglePair, GeomError> {
    let norm = n.norm();
    if !(norm > 1e-12) || !norm.is_finite() {
        return Err(GeomError::DegenerateNormal);
    }
    let rho = n.x.hypot(n.y);
    let phi = rho.atan2(n.z);
    let theta = if rho == 0.0 { 0.0 } else { n.y.atan2(n.x) };
    Ok(AnglePair { phi, theta })
}

/// Half-space cut of the unit cube.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneCut {
    pub normal: Vec3,
    pub alpha: f64,
}

impl PlaneCut {
    pub fn new(normal: Vec3, alpha: f64) -> Self {
        Self { normal, alpha }
    }

    pub fn half_space(&self) -> HalfSpace {
        HalfSpace::new(self.normal, self.alpha)
    }

    /// The cut describing the other side of the same plane.
    pub fn complement(&self) -> Self {
        Self {
            normal: -self.normal,
            alpha: -self.alpha,
        }
    }
}

/// Volume fraction and centroid of the material inside a unit cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellMoments {
    pub volume_fraction: f64,
    pub centroid: Vec3,
}

impl CellMoments {
    /// Moments of the rest of the cell, from `C c + (1-C) c' = x⁰`.
    pub fn complement(&self) -> CellMoments {
        let rest = 1.0 - self.volume_fraction;
        let centroid = if rest > 0.0 {
            (CELL_CENTER - self.centroid * self.volume_fraction) / rest
        } else {
            CELL_CENTER
        };
        CellMoments {
            volume_fraction: rest,
            centroid,
        }
    }
}

/// Range of `n·x` over the cube's vertices.
#[inline]
pub fn alpha_range(n: &Vec3) -> (f64, f64) {
    let lo = n.x.min(0.0) + n.y.min(0.0) + n.z.min(0.0);
    let hi = n.x.max(0.0) + n.y.max(0.0) + n.z.max(0.0);
    (lo, hi)
}

/// Exact moments of the material side of `p`.
pub fn moments_from_plane(p: &PlaneCut) -> CellMoments {
    let (lo, hi) = alpha_range(&p.normal);
    if p.alpha >= hi {
        return CellMoments {
            volume_fraction: 1.0,
            centroid: CELL_CENTER,
        };
    }
    if p.alpha < lo {
        return CellMoments {
            volume_fraction: 0.0,
            centroid: lowest_vertex(&p.normal),
        };
    }
    let (vol, first) = plane_moments(&p.normal, p.alpha);
    if vol <= 0.0 {
        return CellMoments {
            volume_fraction: 0.0,
            centroid: lowest_vertex(&p.normal),
        };
    }
    let centroid = (first / vol).map(|x| x.clamp(0.0, 1.0));
    CellMoments {
        volume_fraction: vol.clamp(0.0, 1.0),
        centroid,
    }
}

fn lowest_vertex(n: &Vec3) -> Vec3 {
    n.map(|c| if c > 0.0 { 0.0 } else { 1.0 })
}

/// Area of `{(u, v) ∈ [0,1]² : a u + b v <= r}`.
#[inline]
fn square_area_below(a: f64, b: f64, r: f64) -> f64 {
    const SQUARE: [(f64, f64); 4] = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
    let mut d = [0.0; 4];
    let mut inside = 0;
    for (k, (u, v)) in SQUARE.iter().enumerate() {
        d[k] = a * u + b * v - r;
        if d[k] <= 0.0 {
            inside += 1;
        }
    }
    if inside == 4 {
        return 1.0;
    }
    if inside == 0 {
        return 0.0;
    }
    let mut poly = [(0.0, 0.0); 8];
    let mut m = 0;
    for i in 0..4 {
        let j = (i + 1) % 4;
        let (pa, da) = (SQUARE[i], d[i]);
        let (pb, db) = (SQUARE[j], d[j]);
        if da <= 0.0 {
            poly[m] = pa;
            m += 1;
        }
        if (da <= 0.0) != (db <= 0.0) {
            let t = da / (da - db);
            poly[m] = (pa.0 + (pb.0 - pa.0) * t, pa.1 + (pb.1 - pa.1) * t);
            m += 1;
        }
    }
    let mut twice = 0.0;
    for i in 0..m {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % m];
        twice += x0 * y1 - x1 * y0;
    }
    0.5 * twice
}

/// `[∫s, ∫s², ∫u s, ∫v s]` over `{(u, v) ∈ [0,1]² : a u + b v <= r}` with
/// `s = a u + b v − r`, by the edge-midpoint rule on a triangle fan.
#[inline]
fn square_face_integrals(a: f64, b: f64, r: f64) -> [f64; 4] {
    const SQUARE: [(f64, f64); 4] = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
    let mut d = [0.0; 4];
    let mut inside = 0;
    for (k, (u, v)) in SQUARE.iter().enumerate() {
        d[k] = a * u + b * v - r;
        if d[k] <= 0.0 {
            inside += 1;
        }
    }
    let mut out = [0.0; 4];
    if inside == 0 {
        return out;
    }
    let mut poly = [(0.0, 0.0); 8];
    let mut m = 0;
    for i in 0..4 {
        let j = (i + 1) % 4;
        let (pa, da) = (SQUARE[i], d[i]);
        let (pb, db) = (SQUARE[j], d[j]);
        if da <= 0.0 {
            poly[m] = pa;
            m += 1;
        }
        if (da <= 0.0) != (db <= 0.0) {
            let t = da / (da - db);
            poly[m] = (pa.0 + (pb.0 - pa.0) * t, pa.1 + (pb.1 - pa.1) * t);
            m += 1;
        }
    }
    let mut acc = |p: (f64, f64), w: f64| {
        let s = a * p.0 + b * p.1 - r;
        out[0] += w * s;
        out[1] += w * s * s;
        out[2] += w * p.0 * s;
        out[3] += w * p.1 * s;
    };
    let p0 = poly[0];
    for k in 1..m.saturating_sub(1) {
        let (p1, p2) = (poly[k], poly[k + 1]);
        let area = 0.5 * ((p1.0 - p0.0) * (p2.1 - p0.1) - (p2.0 - p0.0) * (p1.1 - p0.1));
        let w = area / 3.0;
        acc(((p0.0 + p1.0) * 0.5, (p0.1 + p1.1) * 0.5), w);
        acc(((p1.0 + p2.0) * 0.5, (p1.1 + p2.1) * 0.5), w);
        acc(((p2.0 + p0.0) * 0.5, (p2.1 + p0.1) * 0.5), w);
    }
    out
}

/// Volume and first moment of the material side of `(n, alpha)`.
///
/// With `s = n·x − alpha`, which vanishes on the cut, the divergence theorem
/// applied to `s`, `s²/2` and `x_j s` reduces every volume integral to the
/// two cube faces normal to the dominant axis of `n`.
pub fn plane_moments(n: &Vec3, alpha: f64) -> (f64, Vec3) {
    let i = n.iamax();
    let (ia, ib) = ((i + 1) % 3, (i + 2) % 3);
    let (a, b, ni) = (n[ia], n[ib], n[i]);
    let lower = square_face_integrals(a, b, alpha);
    let upper = square_face_integrals(a, b, alpha - ni);
    let vol = (upper[0] - lower[0]) / ni;
    let s_int = 0.5 * (upper[1] - lower[1]) / ni;
    let mut first = Vec3::zeros();
    first[i] = (upper[0] - s_int) / ni;
    first[ia] = (upper[2] - lower[2]) / ni;
    first[ib] = (upper[3] - lower[3]) / ni;
    (vol, first)
}

/// Volume fraction and cut area of the material side, from the clipped
/// areas of the six cube faces (divergence theorem with `F = x/3`).
///
/// Cheaper than clipping the polyhedron and used inside the offset solve;
/// `n` must be a unit vector.
pub fn volume_and_cut_area(n: &Vec3, alpha: f64) -> (f64, f64) {
    let mut upper = [0.0; 3];
    let mut lower = [0.0; 3];
    for axis in 0..3 {
        let (a, b) = (n[(axis + 1) % 3], n[(axis + 2) % 3]);
        lower[axis] = square_area_below(a, b, alpha);
        upper[axis] = square_area_below(a, b, alpha - n[axis]);
    }
    let mut cut = 0.0;
    for axis in 0..3 {
        cut += n[axis] * (lower[axis] - upper[axis]);
    }
    let cut = cut.max(0.0);
    let vol = (upper[0] + upper[1] + upper[2] + alpha * cut) / 3.0;
    (vol.clamp(0.0, 1.0), cut)
}

/// Offset `alpha` such that the material side of `(n, alpha)` fills
/// `target` of the cube.
///
/// Brackets the root between consecutive vertex projections (the volume is
/// an exact cubic in between) and refines it with Newton steps safeguarded
/// by bisection; the derivative of the volume is the cut area.
pub fn alpha_from_volume(n: &Vec3, target: f64) -> Result<f64, GeomError> {
    if !(0.0..=1.0).contains(&target) {
        return Err(GeomError::VolumeOutOfRange(target));
    }
    let norm = n.norm();
    if !(norm > 1e-12) || !norm.is_finite() {
        return Err(GeomError::DegenerateNormal);
    }
    let n = if (norm - 1.0).abs() > 4.0 * f64::EPSILON { n / norm } else { *n };
    let (lo_a, hi_a) = alpha_range(&n);
    if target == 0.0 {
        return Ok(lo_a);
    }
    if target == 1.0 {
        return Ok(hi_a);
    }

    if let Some(x) = polish_alpha(&n, target, closed_form_alpha(&n, target), lo_a, hi_a) {
        return Ok(x);
    }

    let mut knots = [0.0f64; 8];
    for (k, slot) in knots.iter_mut().enumerate() {
        let v = Vec3::new((k & 1) as f64, ((k >> 1) & 1) as f64, ((k >> 2) & 1) as f64);
        *slot = n.dot(&v);
    }
    knots.sort_by(f64::total_cmp);

    // knots[lo] has volume <= target, knots[hi] has volume >= target
    let (mut lo_k, mut hi_k) = (0usize, 7usize);
    let (mut v_lo, mut v_hi) = (0.0, 1.0);
    while hi_k - lo_k > 1 {
        let mid = (lo_k + hi_k) / 2;
        let (v, _) = volume_and_cut_area(&n, knots[mid]);
        if v <= target {
            lo_k = mid;
            v_lo = v;
        } else {
            hi_k = mid;
            v_hi = v;
        }
    }
    let (mut lo, mut hi) = (knots[lo_k], knots[hi_k]);
    if v_lo == target {
        return Ok(lo);
    }

    let mut x = if v_hi > v_lo {
        lo + (hi - lo) * (target - v_lo) / (v_hi - v_lo)
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..ALPHA_SOLVE_MAX_ITER {
        let (v, area) = volume_and_cut_area(&n, x);
        let r = v - target;
        if r.abs() <= 1e-15 {
            break;
        }
        if r < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * (1.0 + x.abs()) {
            break;
        }
        let newton = if area > 0.0 { x - r / area } else { f64::NAN };
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(x)
}

/// Offset for volume fraction `v` from the piecewise closed-form inverse
/// (cube-root, quadratic and trigonometric cubic branches over the sorted
/// normal components), accurate to a few ulps away from degenerate normals.
fn closed_form_alpha(n: &Vec3, v: f64) -> f64 {
    let sum = n.x.abs() + n.y.abs() + n.z.abs();
    let mut m = [n.x.abs() / sum, n.y.abs() / sum, n.z.abs() / sum];
    m.sort_by(f64::total_cmp);
    let [m1, m2, m3] = m;
    let m12 = m1 + m2;
    let pr = (6.0 * m1 * m2 * m3).max(1e-50);
    let v1 = m1 * m1 * m1 / pr;
    let v2 = v1 + (m2 - m1) / (2.0 * m3);
    let (mm, v3) = if m3 < m12 {
        (
            m3,
            (m3 * m3 * (3.0 * m12 - m3) + m1 * m1 * (m1 - 3.0 * m3) + m2 * m2 * (m2 - 3.0 * m3)) / pr,
        )
    } else {
        (m12, m12 / (2.0 * m3))
    };
    let ch = v.min(1.0 - v);
    let a = if ch < v1 {
        (pr * ch).cbrt()
    } else if ch < v2 {
        0.5 * (m1 + (m1 * m1 + 8.0 * m2 * m3 * (ch - v1)).sqrt())
    } else if ch < v3 {
        let p12 = (2.0 * m1 * m2).sqrt();
        let q = 3.0 * (m12 - 2.0 * m3 * ch) / (4.0 * p12);
        let cs = (q.clamp(-1.0, 1.0).acos() / 3.0).cos();
        p12 * ((3.0 * (1.0 - cs * cs)).sqrt() - cs) + m12
    } else if m12 <= m3 {
        m3 * ch + 0.5 * mm
    } else {
        let p = m1 * (m2 + m3) + m2 * m3 - 0.25;
        let p12 = p.sqrt();
        let q = 3.0 * m1 * m2 * m3 * (0.5 - ch) / (2.0 * p * p12);
        let cs = (q.clamp(-1.0, 1.0).acos() / 3.0).cos();
        p12 * ((3.0 * (1.0 - cs * cs)).sqrt() - cs) + 0.5
    };
    let a = if v > 0.5 { 1.0 - a } else { a };
    let (lo, _) = alpha_range(n);
    lo + sum * a
}

/// A few Newton steps from `x`; `None` if they leave the cube's offset
/// range or fail to reach the volume tolerance.
fn polish_alpha(n: &Vec3, target: f64, mut x: f64, lo: f64, hi: f64) -> Option<f64> {
    if !x.is_finite() {
        return None;
    }
    x = x.clamp(lo, hi);
    for _ in 0..4 {
        let (v, area) = volume_and_cut_area(n, x);
        let r = v - target;
        if r.abs() <= 1e-15 {
            return Some(x);
        }
        if !(area > 0.0) {
            return None;
        }
        x -= r / area;
        if !(x > lo && x < hi) {
            return None;
        }
    }
    None
}

/// The cut with normal `n` holding volume fraction `target`.
pub fn plane_with_volume(n: &Vec3, target: f64) -> Result<PlaneCut, GeomError> {
    let alpha = alpha_from_volume(n, target)?;
    Ok(PlaneCut::new(n.normalize(), alpha))
}

/// Cap polygon of a cut inside the unit cube, if the plane crosses it.
pub fn cut_polygon(p: &PlaneCut) -> Option<Face> {
    Polyhedron::unit_cube().clip_with_cap(&p.half_space()).1
}
