//! Iterative moment-of-fluid reconstruction.
//!
//! Minimizes `‖c_ref − c(φ, θ)‖₂` over the normal angles, with the offset
//! re-solved at every evaluation so the volume constraint always holds.
//! Damped Gauss–Newton (Levenberg) steps on a central-difference Jacobian.

use thiserror::Error;

use crate::geom::{
    alpha_from_volume, angles_from_normal, moments_from_plane, AnglePair, CellMoments, GeomError,
    PlaneCut, Vec3, CELL_CENTER,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MofError {
    #[error("full/empty cell has no interface (C = {0})")]
    NoInterface(f64),
    #[error("invalid solver options: {0}")]
    BadOptions(&'static str),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Stop once the centroid residual (or the angle step) drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Finite-difference step in radians.
    pub fd_step: f64,
    pub lambda_init: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Stop when an accepted step shrinks the residual norm by less than
    /// this fraction; `0` disables the check.
    pub stall_tol: f64,
    /// Solve the smaller-volume side and flip the result when `C > 1/2`.
    pub use_complement: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            fd_step: 1e-5,
            lambda_init: 1e-3,
            lambda_min: 1e-12,
            lambda_max: 1e8,
            stall_tol: 1e-6,
            use_complement: true,
        }
    }
}

impl SolverOptions {
    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn validate(&self) -> Result<(), MofError> {
        if !(self.tol > 0.0) {
            return Err(MofError::BadOptions("tol must be positive"));
        }
        if self.max_iter < 1 {
            return Err(MofError::BadOptions("max_iter must be at least 1"));
        }
        if !(self.fd_step > 0.0) {
            return Err(MofError::BadOptions("fd_step must be positive"));
        }
        if !(self.stall_tol >= 0.0 && self.stall_tol < 1.0) {
            return Err(MofError::BadOptions("stall_tol must lie in [0, 1)"));
        }
        if !(self.lambda_min > 0.0 && self.lambda_min <= self.lambda_max) {
            return Err(MofError::BadOptions("damping bounds out of order"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MofSolution {
    pub angles: AnglePair,
    pub plane: PlaneCut,
    pub achieved: CellMoments,
    /// `‖c_ref − achieved.centroid‖₂`
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialGuess {
    pub angles: AnglePair,
    /// The centroid sat on the cell center and the fixed fallback was used.
    pub degenerate: bool,
}

pub const FALLBACK_GUESS: AnglePair = AnglePair::new(std::f64::consts::FRAC_PI_2, 0.0);

/// Angles of the direction from the centroid toward the cell center. With the
/// material on the `n·x <= α` side this puts `c_ref` on the material side.
pub fn initial_guess(c_ref: &Vec3) -> InitialGuess {
    let d = CELL_CENTER - c_ref;
    if d.norm() < 1e-12 {
        return InitialGuess {
            angles: FALLBACK_GUESS,
            degenerate: true,
        };
    }
    match angles_from_normal(&d) {
        Ok(angles) => InitialGuess {
            angles,
            degenerate: false,
        },
        Err(_) => InitialGuess {
            angles: FALLBACK_GUESS,
            degenerate: true,
        },
    }
}

/// Cut with the given angles and volume fraction.
pub fn plane_for(a: AnglePair, vol: f64) -> Result<PlaneCut, GeomError> {
    let n = a.normal();
    Ok(PlaneCut::new(n, alpha_from_volume(&n, vol)?))
}

fn evaluate(a: AnglePair, vol: f64) -> Result<(PlaneCut, CellMoments), GeomError> {
    let plane = plane_for(a, vol)?;
    Ok((plane, moments_from_plane(&plane)))
}

/// Residual `c_ref − c(a)` of the volume-constrained cut with angles `a`.
pub fn objective(a: AnglePair, vol: f64, c_ref: &Vec3) -> Result<Vec3, GeomError> {
    let (_, m) = evaluate(a, vol)?;
    Ok(c_ref - m.centroid)
}

pub(crate) fn check_fraction(vol: f64) -> Result<(), MofError> {
    if vol > 0.0 && vol < 1.0 {
        Ok(())
    } else {
        Err(MofError::NoInterface(vol))
    }
}

/// Reconstruct the cut whose centroid is closest to `c_ref` among all cuts
/// holding `vol`, starting from [`initial_guess`].
pub fn solve_mof(c_ref: &Vec3, vol: f64, opts: &SolverOptions) -> Result<MofSolution, MofError> {
    let guess = initial_guess(c_ref);
    solve_mof_from(c_ref, vol, guess.angles, opts)
}

/// [`solve_mof`] with an explicit starting point.
pub fn solve_mof_from(
    c_ref: &Vec3,
    vol: f64,
    start: AnglePair,
    opts: &SolverOptions,
) -> Result<MofSolution, MofError> {
    check_fraction(vol)?;
    opts.validate()?;

    if opts.use_complement && vol > 0.5 {
        let target = CellMoments {
            volume_fraction: vol,
            centroid: *c_ref,
        }
        .complement();
        let inner = gauss_newton(&target.centroid, target.volume_fraction, start.antipode(), opts)?;
        let plane = inner.plane.complement();
        let achieved = moments_from_plane(&plane);
        let angles = inner.angles.antipode();
        return Ok(MofSolution {
            angles,
            plane,
            achieved,
            residual_norm: (c_ref - achieved.centroid).norm(),
            iterations: inner.iterations,
            converged: inner.converged,
        });
    }
    gauss_newton(c_ref, vol, start, opts)
}

struct Iterate {
    angles: AnglePair,
    plane: PlaneCut,
    moments: CellMoments,
    residual: Vec3,
    norm: f64,
}

fn iterate_at(a: AnglePair, vol: f64, c_ref: &Vec3) -> Result<Iterate, GeomError> {
    let (plane, moments) = evaluate(a, vol)?;
    let residual = c_ref - moments.centroid;
    Ok(Iterate {
        angles: a,
        plane,
        moments,
        norm: residual.norm(),
        residual,
    })
}

/// Central-difference Jacobian of the centroid with respect to `(φ, θ)`.
pub fn centroid_jacobian(a: AnglePair, vol: f64, step: f64) -> Result<[Vec3; 2], GeomError> {
    let centroid = |phi: f64, theta: f64| -> Result<Vec3, GeomError> {
        Ok(evaluate(AnglePair::new(phi, theta), vol)?.1.centroid)
    };
    let d_phi = (centroid(a.phi + step, a.theta)? - centroid(a.phi - step, a.theta)?) / (2.0 * step);
    let d_theta =
        (centroid(a.phi, a.theta + step)? - centroid(a.phi, a.theta - step)?) / (2.0 * step);
    Ok([d_phi, d_theta])
}

fn gauss_newton(
    c_ref: &Vec3,
    vol: f64,
    start: AnglePair,
    opts: &SolverOptions,
) -> Result<MofSolution, MofError> {
    let mut current = iterate_at(start, vol, c_ref)?;
    let mut lambda = opts.lambda_init;
    let mut iterations = 0;
    let mut converged = current.norm <= opts.tol;

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        // The residual is c_ref − c, so its Jacobian is minus the centroid's.
        let [jp, jt] = centroid_jacobian(current.angles, vol, opts.fd_step)?;
        let (jp, jt) = (-jp, -jt);
        let h00 = jp.dot(&jp);
        let h01 = jp.dot(&jt);
        let h11 = jt.dot(&jt);
        let g0 = jp.dot(&current.residual);
        let g1 = jt.dot(&current.residual);
        let scale = h00.max(h11).max(1e-300);

        let mut accepted = false;
        let mut stalled = false;
        let mut step_norm = f64::INFINITY;
        while lambda <= opts.lambda_max {
            let damp = lambda * scale;
            let (a00, a11) = (h00 + damp, h11 + damp);
            let det = a00 * a11 - h01 * h01;
            if !(det > 0.0) || !det.is_finite() {
                lambda *= 10.0;
                continue;
            }
            let dp = -(a11 * g0 - h01 * g1) / det;
            let dt = -(a00 * g1 - h01 * g0) / det;
            step_norm = dp.hypot(dt);
            let trial = AnglePair::wrapped(current.angles.phi + dp, current.angles.theta + dt);
            let next = iterate_at(trial, vol, c_ref)?;
            if next.norm < current.norm {
                stalled = current.norm - next.norm <= opts.stall_tol * current.norm;
                current = next;
                lambda = (lambda / 10.0).max(opts.lambda_min);
                accepted = true;
                break;
            }
            if step_norm <= opts.tol {
                break;
            }
            lambda *= 10.0;
        }

        if current.norm <= opts.tol {
            converged = true;
        }
        if !accepted || stalled || step_norm <= opts.tol {
            break;
        }
    }

    // `current` only ever moves to strictly better iterates, so it is the
    // best one seen.
    Ok(MofSolution {
        angles: current.angles,
        plane: current.plane,
        achieved: current.moments,
        residual_norm: current.norm,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn initial_guess_examples() {
        let g = initial_guess(&Vec3::new(0.5, 0.5, 0.25));
        assert_eq!(g.angles, AnglePair::new(0.0, 0.0));
        assert!(!g.degenerate);
        let g = initial_guess(&Vec3::new(0.25, 0.5, 0.5));
        assert!((g.angles.phi - PI / 2.0).abs() < 1e-15 && g.angles.theta.abs() < 1e-15);
        let g = initial_guess(&CELL_CENTER);
        assert!(g.degenerate);
        assert_eq!(g.angles, FALLBACK_GUESS);
    }

    #[test]
    fn objective_vanishes_on_exact_slab() {
        let f = objective(AnglePair::new(0.0, 0.0), 0.5, &Vec3::new(0.5, 0.5, 0.25)).unwrap();
        assert!(f.norm() < 1e-15);
    }

    #[test]
    fn objective_is_locally_lipschitz() {
        let truth = AnglePair::new(1.1, -0.7);
        let vol = 0.3;
        let c = evaluate(truth, vol).unwrap().1.centroid;
        assert!(objective(truth, vol, &c).unwrap().norm() < 1e-10);
        let f = objective(AnglePair::new(1.1 + 1e-3, -0.7), vol, &c).unwrap();
        assert!(f.norm() > 0.0);
        assert!(f.norm() < 1e-2 && f.norm() > 1e-5, "{}", f.norm());
    }

    #[test]
    fn slab_solve() {
        let s = solve_mof(&Vec3::new(0.5, 0.5, 0.25), 0.5, &SolverOptions::default()).unwrap();
        assert!((s.plane.normal - Vec3::z()).norm() < 1e-9);
        assert!(s.residual_norm <= 1e-10);
        assert!(s.converged);
    }

    #[test]
    fn rejects_full_and_empty() {
        let o = SolverOptions::default();
        assert_eq!(solve_mof(&CELL_CENTER, 0.0, &o), Err(MofError::NoInterface(0.0)));
        assert_eq!(solve_mof(&CELL_CENTER, 1.0, &o), Err(MofError::NoInterface(1.0)));
        let bad = SolverOptions { max_iter: 0, ..o };
        assert!(matches!(solve_mof(&Vec3::new(0.5, 0.5, 0.25), 0.5, &bad), Err(MofError::BadOptions(_))));
    }

    #[test]
    fn recovers_generic_cut_on_both_sides() {
        for &(phi, theta, vol) in &[(0.4, 2.0, 0.1), (2.3, -0.3, 0.8), (1.5, 3.0, 0.55), (0.05, 1.0, 0.02)] {
            let truth = AnglePair::new(phi, theta);
            let (plane, m) = evaluate(truth, vol).unwrap();
            let s = solve_mof(&m.centroid, vol, &SolverOptions::default()).unwrap();
            assert!(s.converged, "{phi} {theta} {vol}: {}", s.residual_norm);
            let err = s.plane.normal.dot(&plane.normal).clamp(-1.0, 1.0).acos();
            assert!(err < 1e-6, "{err}");
            assert!((s.achieved.volume_fraction - vol).abs() <= 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_half_step() {
        let a = AnglePair::new(1.0, 0.5);
        let j1 = centroid_jacobian(a, 0.35, 1e-4).unwrap();
        let j2 = centroid_jacobian(a, 0.35, 5e-5).unwrap();
        for k in 0..2 {
            assert!((j1[k] - j2[k]).norm() < 1e-7);
        }
    }
}
