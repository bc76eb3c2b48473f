//! Convex polyhedra stored as outward-oriented face loops.
//!
//! Faces are counter-clockwise when seen from outside. Clipping by a
//! half-space runs Sutherland–Hodgman on every face and closes the hole with
//! a cap polygon built from the points that landed on the cutting plane.

use smallvec::SmallVec;

use super::Vec3;

/// Vertex loop of a single face.
pub type Face = SmallVec<[Vec3; 8]>;

/// Signed distances inside this band count as lying on the plane, and
/// on-plane vertices are kept on the material side.
pub const ON_PLANE_TOL: f64 = 1e-14;

/// Closed half-space `{x : normal·x <= offset}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfSpace {
    pub normal: Vec3,
    pub offset: f64,
}

impl HalfSpace {
    pub fn new(normal: Vec3, offset: f64) -> Self {
        Self { normal, offset }
    }

    /// `x[axis] <= value`
    pub fn axis_upper(axis: usize, value: f64) -> Self {
        let mut normal = Vec3::zeros();
        normal[axis] = 1.0;
        Self { normal, offset: value }
    }

    /// `x[axis] >= value`
    pub fn axis_lower(axis: usize, value: f64) -> Self {
        let mut normal = Vec3::zeros();
        normal[axis] = -1.0;
        Self { normal, offset: -value }
    }

    #[inline]
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

#[derive(Clone, Debug, Default)]
pub struct Polyhedron {
    faces: SmallVec<[Face; 10]>,
}

const CUBE_FACES: [[[f64; 3]; 4]; 6] = [
    [[0., 0., 0.], [0., 0., 1.], [0., 1., 1.], [0., 1., 0.]],
    [[1., 0., 0.], [1., 1., 0.], [1., 1., 1.], [1., 0., 1.]],
    [[0., 0., 0.], [1., 0., 0.], [1., 0., 1.], [0., 0., 1.]],
    [[0., 1., 0.], [0., 1., 1.], [1., 1., 1.], [1., 1., 0.]],
    [[0., 0., 0.], [0., 1., 0.], [1., 1., 0.], [1., 0., 0.]],
    [[0., 0., 1.], [1., 0., 1.], [1., 1., 1.], [0., 1., 1.]],
];

impl Polyhedron {
    pub fn unit_cube() -> Self {
        Self::aabb(Vec3::zeros(), Vec3::repeat(1.0))
    }

    /// Axis-aligned box `[lo, hi]`.
    pub fn aabb(lo: Vec3, hi: Vec3) -> Self {
        let ext = hi - lo;
        let faces = CUBE_FACES
            .iter()
            .map(|quad| {
                quad.iter()
                    .map(|v| lo + Vec3::new(v[0], v[1], v[2]).component_mul(&ext))
                    .collect()
            })
            .collect();
        Self { faces }
    }

    pub fn from_faces(faces: impl IntoIterator<Item = Face>) -> Self {
        Self {
            faces: faces.into_iter().collect(),
        }
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn clip(&self, hs: &HalfSpace) -> Polyhedron {
        self.clip_with_cap(hs).0
    }

    /// Keep the part inside `hs`. Also returns the cap polygon lying on the
    /// cutting plane when the plane actually cuts the body.
    pub fn clip_with_cap(&self, hs: &HalfSpace) -> (Polyhedron, Option<Face>) {
        let mut out = Polyhedron::default();
        let mut cap_pts: SmallVec<[Vec3; 16]> = SmallVec::new();
        let mut cut = false;

        for face in &self.faces {
            let dist: SmallVec<[f64; 8]> = face.iter().map(|p| hs.signed_distance(p)).collect();
            if dist.iter().all(|&d| d <= ON_PLANE_TOL) {
                for (p, &d) in face.iter().zip(&dist) {
                    if d >= -ON_PLANE_TOL {
                        cap_pts.push(*p);
                    }
                }
                out.faces.push(face.clone());
                continue;
            }
            cut = true;
            if dist.iter().all(|&d| d > ON_PLANE_TOL) {
                continue;
            }

            let n = face.len();
            let mut poly = Face::new();
            for i in 0..n {
                let j = (i + 1) % n;
                let (a, da) = (face[i], dist[i]);
                let (b, db) = (face[j], dist[j]);
                if da <= ON_PLANE_TOL {
                    poly.push(a);
                    if da >= -ON_PLANE_TOL {
                        cap_pts.push(a);
                    }
                }
                let crosses =
                    (da < -ON_PLANE_TOL && db > ON_PLANE_TOL) || (da > ON_PLANE_TOL && db < -ON_PLANE_TOL);
                if crosses {
                    // Always interpolate from the inside vertex so the two faces
                    // sharing this edge produce bit-identical points.
                    let p = if da < 0.0 {
                        a + (b - a) * (da / (da - db))
                    } else {
                        b + (a - b) * (db / (db - da))
                    };
                    poly.push(p);
                    cap_pts.push(p);
                }
            }
            if poly.len() >= 3 {
                out.faces.push(poly);
            }
        }

        if !cut {
            return (self.clone(), None);
        }
        if out.faces.is_empty() {
            return (out, None);
        }
        let cap = build_cap(&cap_pts, &hs.normal);
        if let Some(cap) = &cap {
            out.faces.push(cap.clone());
        }
        (out, cap)
    }

    /// Volume and first moment `∫ x dV`, summed over signed tetrahedra that
    /// fan each face out from an interior point.
    pub fn moments(&self) -> (f64, Vec3) {
        if self.faces.is_empty() {
            return (0.0, Vec3::zeros());
        }
        let mut origin = Vec3::zeros();
        let mut count = 0usize;
        for face in &self.faces {
            for p in face {
                origin += p;
                count += 1;
            }
        }
        origin /= count as f64;

        let mut vol6 = 0.0;
        let mut mom24 = Vec3::zeros();
        for face in &self.faces {
            let a = face[0] - origin;
            for w in face[1..].windows(2) {
                let b = w[0] - origin;
                let c = w[1] - origin;
                let v6 = a.dot(&b.cross(&c));
                vol6 += v6;
                mom24 += (a + b + c) * v6;
            }
        }
        let volume = vol6 / 6.0;
        let first = mom24 / 24.0 + origin * volume;
        (volume, first)
    }

    pub fn volume(&self) -> f64 {
        self.moments().0
    }

    pub fn translated(&self, shift: &Vec3) -> Polyhedron {
        Polyhedron {
            faces: self
                .faces
                .iter()
                .map(|f| f.iter().map(|p| p + shift).collect())
                .collect(),
        }
    }
}

/// Order the on-plane points counter-clockwise about `normal`.
fn build_cap(points: &[Vec3], normal: &Vec3) -> Option<Face> {
    let mut uniq: SmallVec<[Vec3; 16]> = SmallVec::new();
    for p in points {
        if !uniq.iter().any(|q| (q - p).norm_squared() < 1e-26) {
            uniq.push(*p);
        }
    }
    if uniq.len() < 3 {
        return None;
    }
    let center = uniq.iter().sum::<Vec3>() / uniq.len() as f64;
    let (u, v) = plane_basis(normal);
    let mut keyed: SmallVec<[(f64, Vec3); 16]> = uniq
        .iter()
        .map(|p| {
            let d = p - center;
            (d.dot(&v).atan2(d.dot(&u)), *p)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    Some(keyed.into_iter().map(|(_, p)| p).collect())
}

/// Orthonormal `(u, v)` with `u × v` along `normal`.
pub(crate) fn plane_basis(normal: &Vec3) -> (Vec3, Vec3) {
    let n = normal.normalize();
    let helper = if n.x.abs() < 0.6 {
        Vec3::x()
    } else if n.y.abs() < 0.6 {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let u = helper.cross(&n).normalize();
    let v = n.cross(&u);
    (u, v)
}

/// Area vector `½ Σ pᵢ × pᵢ₊₁` of a planar polygon.
pub fn polygon_area_vector(face: &[Vec3]) -> Vec3 {
    let mut acc = Vec3::zeros();
    let n = face.len();
    for i in 0..n {
        acc += face[i].cross(&face[(i + 1) % n]);
    }
    acc * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cube_moments() {
        let (v, m) = Polyhedron::unit_cube().moments();
        assert!((v - 1.0).abs() < 1e-15);
        assert!((m - Vec3::repeat(0.5)).norm() < 1e-15);
    }

    #[test]
    fn faces_point_outward() {
        let cube = Polyhedron::unit_cube();
        for f in cube.faces() {
            let centroid = f.iter().sum::<Vec3>() / f.len() as f64;
            let area = polygon_area_vector(f);
            assert!((area.norm() - 1.0).abs() < 1e-15);
            assert!(area.dot(&(centroid - Vec3::repeat(0.5))) > 0.0);
        }
    }

    #[test]
    fn box_moments() {
        let lo = Vec3::new(0.2, -1.0, 3.0);
        let hi = Vec3::new(0.7, 0.5, 3.25);
        let (v, m) = Polyhedron::aabb(lo, hi).moments();
        let vol = 0.5 * 1.5 * 0.25;
        assert!((v - vol).abs() < 1e-14);
        assert!((m / v - (lo + hi) / 2.0).norm() < 1e-14);
    }

    #[test]
    fn clip_keeps_half() {
        let hs = HalfSpace::axis_upper(1, 0.25);
        let (p, cap) = Polyhedron::unit_cube().clip_with_cap(&hs);
        let (v, m) = p.moments();
        assert!((v - 0.25).abs() < 1e-15);
        assert!((m / v - Vec3::new(0.5, 0.125, 0.5)).norm() < 1e-15);
        let cap = cap.unwrap();
        assert_eq!(cap.len(), 4);
        let area = polygon_area_vector(&cap);
        assert!((area - Vec3::y()).norm() < 1e-15);
    }

    #[test]
    fn clip_missing_and_full() {
        let cube = Polyhedron::unit_cube();
        let all = cube.clip(&HalfSpace::axis_upper(0, 2.0));
        assert!((all.volume() - 1.0).abs() < 1e-15);
        let none = cube.clip(&HalfSpace::axis_upper(0, -1.0));
        assert!(none.is_empty());
        assert_eq!(none.volume(), 0.0);
    }

    #[test]
    fn plane_through_vertices_is_deterministic() {
        // x + y <= 1 passes through the edge (1,0,z)-(0,1,z)
        let hs = HalfSpace::new(Vec3::new(1.0, 1.0, 0.0) / 2f64.sqrt(), 1.0 / 2f64.sqrt());
        let p = Polyhedron::unit_cube().clip(&hs);
        assert!((p.volume() - 0.5).abs() < 1e-15);
        // on-plane points count as inside
        let tight = Polyhedron::unit_cube().clip(&HalfSpace::axis_upper(0, 1.0));
        assert!((tight.volume() - 1.0).abs() < 1e-15);
        let flat = Polyhedron::unit_cube().clip(&HalfSpace::axis_upper(0, 0.0));
        assert!(flat.volume().abs() < 1e-15);
    }

    #[test]
    fn successive_clips_make_a_corner_tet() {
        let cube = Polyhedron::unit_cube();
        let n = Vec3::new(1.0, 1.0, 1.0).normalize();
        let a = 0.3;
        let p = cube.clip(&HalfSpace::new(n, a / 3f64.sqrt()));
        let (v, m) = p.moments();
        assert!((v - a * a * a / 6.0).abs() < 1e-15);
        assert!((m / v - Vec3::repeat(a / 4.0)).norm() < 1e-14);
        // slicing the tet again by x <= 0.1
        let q = p.clip(&HalfSpace::axis_upper(0, 0.1));
        let r = p.clip(&HalfSpace::axis_lower(0, 0.1));
        assert!((q.volume() + r.volume() - v).abs() < 1e-16);
    }
}
