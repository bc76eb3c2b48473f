use std::f64::consts::PI;

use mofkit_core::geom::{moments_from_plane, normal_from_angles, plane_with_volume, AnglePair, Vec3};
use mofkit_core::mofopt::{initial_guess, objective, solve_mof, SolverOptions};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn exact_cut(phi: f64, theta: f64, c: f64) -> (Vec3, Vec3) {
    let n = normal_from_angles(AnglePair::new(phi, theta));
    let m = moments_from_plane(&plane_with_volume(&n, c).unwrap());
    (n, m.centroid)
}

fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Brute-force minimum of ‖f‖ over a 720 × 360 (θ, φ) grid.
fn grid_minimum(c_ref: &Vec3, c: f64) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..=360 {
        let phi = PI * i as f64 / 360.0;
        for j in 0..720 {
            let theta = -PI + 2.0 * PI * j as f64 / 720.0;
            best = best.min(objective(AnglePair::new(phi, theta), c, c_ref).unwrap().norm());
        }
    }
    best
}

#[test]
fn exact_cuts_are_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let opts = SolverOptions::default();
    for _ in 0..500 {
        let (phi, theta) = (rng.gen_range(0.0..PI), rng.gen_range(-PI..PI));
        let c = rng.gen_range(0.01..0.99);
        let (n, centroid) = exact_cut(phi, theta, c);
        let s = solve_mof(&centroid, c, &opts).unwrap();
        assert!(s.converged && s.residual_norm <= 1e-8, "{phi} {theta} {c}: {}", s.residual_norm);
        assert!(angle_between(&s.plane.normal, &n) <= 1e-6);
        assert!((s.achieved.volume_fraction - c).abs() <= 1e-12);
    }
}

#[test]
fn slab_example() {
    let s = solve_mof(&Vec3::new(0.5, 0.5, 0.25), 0.5, &SolverOptions::default()).unwrap();
    assert!(angle_between(&s.plane.normal, &Vec3::z()) <= 1e-6);
    assert!(s.residual_norm <= 1e-10);
}

#[test]
fn unattainable_centroid_reaches_grid_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let opts = SolverOptions::default();
    for _ in 0..3 {
        let c = rng.gen_range(0.1..0.9);
        let (_, centroid) = exact_cut(rng.gen_range(0.3..2.8), rng.gen_range(-PI..PI), c);
        let dir = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
        let c_ref = centroid + 0.05 * dir;
        let s = solve_mof(&c_ref, c, &opts).unwrap();
        let best = grid_minimum(&c_ref, c);
        assert!(
            !s.converged || s.residual_norm <= 1.05 * best,
            "residual {} grid minimum {best}",
            s.residual_norm
        );
        assert!(s.residual_norm <= 1.05 * best, "residual {} grid minimum {best}", s.residual_norm);
    }
}

#[test]
fn complement_problem_negates_normal() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let opts = SolverOptions::default();
    for _ in 0..200 {
        let c = rng.gen_range(0.02..0.98);
        let n = normal_from_angles(AnglePair::new(rng.gen_range(0.0..PI), rng.gen_range(-PI..PI)));
        let m = moments_from_plane(&plane_with_volume(&n, c).unwrap());
        let rest = m.complement();
        let a = solve_mof(&m.centroid, c, &opts).unwrap();
        let b = solve_mof(&rest.centroid, rest.volume_fraction, &opts).unwrap();
        assert!(angle_between(&a.plane.normal, &-b.plane.normal) <= 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn never_worse_than_initial_guess(
        c in 0.01f64..0.99,
        x in 0.05f64..0.95,
        y in 0.05f64..0.95,
        z in 0.05f64..0.95,
    ) {
        let c_ref = Vec3::new(x, y, z);
        let g = initial_guess(&c_ref);
        prop_assume!(!g.degenerate);
        let start = objective(g.angles, c, &c_ref).unwrap().norm();
        let s = solve_mof(&c_ref, c, &SolverOptions::default()).unwrap();
        prop_assert!(s.residual_norm <= start + 1e-15);
        prop_assert!((s.achieved.volume_fraction - c).abs() <= 1e-12);
        prop_assert!((s.residual_norm - (c_ref - s.achieved.centroid).norm()).abs() <= 1e-15);
    }
}
