//! Analytic, divergence-free benchmark velocity fields with exact
//! face-averaged normal components.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geom::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VelocityField {
    /// Constant velocity.
    Translation { velocity: [f64; 3] },
    /// Solid-body rotation about the vertical line through `center` plus a
    /// constant vertical drift; stream function `-ω/2 [(x-x₀)² + (y-y₀)²]`.
    Rotation { center: [f64; 2], omega: f64, w: f64 },
    /// Time-reversing swirl that stretches and then restores a blob.
    Deformation { period: f64 },
}

/// Mean of `sin(2πs)` over `[a, b]`.
fn mean_sin2pi(a: f64, b: f64) -> f64 {
    ((2.0 * PI * a).cos() - (2.0 * PI * b).cos()) / (2.0 * PI * (b - a))
}

impl VelocityField {
    pub fn translation(u: Vec3) -> Self {
        VelocityField::Translation { velocity: [u.x, u.y, u.z] }
    }

    pub fn zalesak() -> Self {
        VelocityField::Rotation {
            center: [0.5, 0.5],
            omega: 4.0 * PI,
            w: 0.5,
        }
    }

    pub fn deformation(period: f64) -> Self {
        VelocityField::Deformation { period }
    }

    /// Common time modulation of the whole field.
    pub fn time_factor(&self, t: f64) -> f64 {
        match *self {
            VelocityField::Deformation { period } => (PI * t / period).cos(),
            _ => 1.0,
        }
    }

    /// Pointwise velocity.
    pub fn at(&self, p: &Vec3, t: f64) -> Vec3 {
        match *self {
            VelocityField::Translation { velocity } => Vec3::from(velocity),
            VelocityField::Rotation { center, omega, w } => {
                Vec3::new(-omega * (p.y - center[1]), omega * (p.x - center[0]), w)
            }
            VelocityField::Deformation { .. } => {
                let s = |v: f64| (PI * v).sin();
                let s2 = |v: f64| (2.0 * PI * v).sin();
                let f = self.time_factor(t);
                Vec3::new(
                    2.0 * s(p.x).powi(2) * s2(p.y) * s2(p.z) * f,
                    -s2(p.x) * s(p.y).powi(2) * s2(p.z) * f,
                    -s2(p.x) * s2(p.y) * s(p.z).powi(2) * f,
                )
            }
        }
    }

    /// Average over the face `x_axis = lo[axis]`, other coordinates in
    /// `[lo, lo + h]`, of the `axis` velocity component.
    pub fn face_average(&self, axis: usize, lo: &Vec3, h: f64, t: f64) -> f64 {
        match *self {
            VelocityField::Translation { velocity } => velocity[axis],
            // linear in the transverse coordinate, so the mean is the value at
            // the face center
            VelocityField::Rotation { .. } => {
                let mut c = lo.add_scalar(0.5 * h);
                c[axis] = lo[axis];
                self.at(&c, t)[axis]
            }
            VelocityField::Deformation { .. } => {
                let f = self.time_factor(t);
                let s2 = |v: f64| (PI * v).sin().powi(2);
                let m = |d: usize| mean_sin2pi(lo[d], lo[d] + h);
                match axis {
                    0 => 2.0 * s2(lo.x) * m(1) * m(2) * f,
                    1 => -m(0) * s2(lo.y) * m(2) * f,
                    _ => -m(0) * m(1) * s2(lo.z) * f,
                }
            }
        }
    }

    /// Upper bound on `|face_average|` over the unit domain and all times.
    pub fn max_face_speed(&self, n: usize) -> f64 {
        let h = 1.0 / n as f64;
        match *self {
            VelocityField::Translation { velocity } => velocity.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            VelocityField::Rotation { center, omega, w } => {
                // face-center transverse coordinates run over (k + 1/2) h
                let far = |c: f64| (0.5 * h - c).abs().max((1.0 - 0.5 * h - c).abs());
                let r = far(center[0]).max(far(center[1]));
                (omega.abs() * r).max(w.abs())
            }
            VelocityField::Deformation { .. } => 2.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deformation_face_average_matches_quadrature() {
        let v = VelocityField::deformation(3.0);
        let h = 1.0 / 16.0;
        let lo = Vec3::new(3.0 * h, 5.0 * h, 11.0 * h);
        let t = 0.4;
        for axis in 0..3 {
            let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
            let m = 256;
            let mut sum = 0.0;
            for i in 0..m {
                for j in 0..m {
                    let mut p = lo;
                    p[a] += (i as f64 + 0.5) / m as f64 * h;
                    p[b] += (j as f64 + 0.5) / m as f64 * h;
                    sum += v.at(&p, t)[axis];
                }
            }
            let quad = sum / (m * m) as f64;
            let exact = v.face_average(axis, &lo, h, t);
            assert!((quad - exact).abs() < 1e-6 * exact.abs().max(1.0), "{quad} {exact}");
        }
    }

    #[test]
    fn face_fluxes_balance_in_every_cell() {
        let n = 12;
        let h = 1.0 / n as f64;
        for v in [VelocityField::deformation(3.0), VelocityField::zalesak()] {
            for idx in [(0, 0, 0), (3, 7, 2), (11, 5, 9)] {
                let lo = Vec3::new(idx.0 as f64, idx.1 as f64, idx.2 as f64) * h;
                let mut net = 0.0;
                for axis in 0..3 {
                    let mut hi = lo;
                    hi[axis] += h;
                    net += v.face_average(axis, &hi, h, 0.7) - v.face_average(axis, &lo, h, 0.7);
                }
                assert!(net.abs() < 1e-13, "{net}");
            }
        }
    }

    #[test]
    fn deformation_reverses_at_half_period() {
        let v = VelocityField::deformation(3.0);
        let p = Vec3::new(0.3, 0.2, 0.6);
        assert!(v.at(&p, 1.5).norm() < 1e-15);
        assert!((v.at(&p, 0.5) + v.at(&p, 2.5)).norm() < 1e-14);
    }

    #[test]
    fn bounds_cover_face_speeds() {
        let n = 20;
        let h = 1.0 / n as f64;
        for v in [VelocityField::deformation(3.0), VelocityField::zalesak()] {
            let bound = v.max_face_speed(n);
            let mut max = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    for axis in 0..3 {
                        let mut lo = Vec3::new(i as f64 * h, j as f64 * h, 0.5 * i as f64 * h);
                        lo[axis] = (j as f64) * h;
                        max = max.max(v.face_average(axis, &lo, h, 0.0).abs());
                    }
                }
            }
            assert!(max <= bound + 1e-12);
        }
    }
}
