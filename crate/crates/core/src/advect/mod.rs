//! Directionally split transport of volume fraction and centroid on a
//! periodic unit-cube grid, with the interface rebuilt each sweep by a
//! pluggable reconstructor.

mod case;
mod output;
mod shape;
mod sweep;
mod velocity;

use std::sync::Arc;

use thiserror::Error;

use crate::dtree::{dtmof_reconstruct, dtmof_reconstruct_symmetric, TreeModel};
use crate::geom::{PlaneCut, Vec3};
use crate::mofopt::{solve_mof, MofError, SolverOptions};

pub use case::{
    compute_errors, convergence_order, run_case, CaseKind, CaseResult, CaseSpec, ErrorReport, Snapshot,
};
pub use output::{write_obj, write_vtk};
pub use shape::{init_field, init_field_with_depth, Shape, INIT_DEPTH};
pub use sweep::{step, sweep, FaceVelocities, SweepStats, C_EMPTY, C_FULL};
pub use velocity::VelocityField;

#[derive(Debug, Error)]
pub enum AdvectError {
    #[error("CFL number {0} exceeds 1")]
    Cfl(f64),
    #[error("reconstruction failed: {0}")]
    Reconstruct(#[from] MofError),
    #[error("reference field has no material")]
    EmptyReference,
    #[error("grids differ ({0} vs {1} cells per axis)")]
    GridMismatch(usize, usize),
    #[error("invalid case: {0}")]
    BadCase(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// `n³` cubic cells of width `h = 1/n` covering the periodic unit domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub n: usize,
    pub h: f64,
}

impl Grid {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "grid needs at least one cell");
        Self { n, h: 1.0 / n as f64 }
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.n * self.n * self.n
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    #[inline]
    pub fn coords(&self, id: usize) -> [usize; 3] {
        [id % self.n, (id / self.n) % self.n, id / (self.n * self.n)]
    }

    /// Periodic neighbor of `id` one step along `axis`.
    #[inline]
    pub fn neighbor(&self, id: usize, axis: usize, forward: bool) -> usize {
        let mut c = self.coords(id);
        c[axis] = if forward {
            (c[axis] + 1) % self.n
        } else {
            (c[axis] + self.n - 1) % self.n
        };
        self.index(c[0], c[1], c[2])
    }

    pub fn cell_lo(&self, id: usize) -> Vec3 {
        let c = self.coords(id);
        Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64) * self.h
    }

    pub fn cell_center(&self, id: usize) -> Vec3 {
        self.cell_lo(id).add_scalar(0.5 * self.h)
    }

    pub fn cell_volume(&self) -> f64 {
        self.h * self.h * self.h
    }
}

/// Volume fraction and material centroid (global coordinates) per cell.
/// Empty and full cells carry the cell center.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialField {
    pub grid: Grid,
    pub vol: Vec<f64>,
    pub centroid: Vec<Vec3>,
    pub time: f64,
}

impl MaterialField {
    pub fn empty(grid: Grid) -> Self {
        let centroid = (0..grid.cells()).map(|id| grid.cell_center(id)).collect();
        Self {
            grid,
            vol: vec![0.0; grid.cells()],
            centroid,
            time: 0.0,
        }
    }

    /// `∑ C h³`.
    pub fn total_volume(&self) -> f64 {
        self.vol.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Centroid in the cell's own unit-cube coordinates.
    pub fn local_centroid(&self, id: usize) -> Vec3 {
        (self.centroid[id] - self.grid.cell_lo(id)) / self.grid.h
    }

    pub fn mixed_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.vol.iter().enumerate().filter(|(_, &c)| c > 0.0 && c < 1.0).map(|(i, _)| i)
    }
}

/// Backward operator used during advection, working in unit-cube cell
/// coordinates.
#[derive(Clone, Debug)]
pub enum Reconstructor {
    Iterative(SolverOptions),
    Dtmof { model: Arc<TreeModel>, symmetric: bool },
}

impl Reconstructor {
    /// Iterative reconstruction with the iteration cap used for transport.
    pub fn iterative() -> Self {
        Reconstructor::Iterative(SolverOptions::default().with_max_iter(10))
    }

    pub fn dtmof(model: Arc<TreeModel>) -> Self {
        Reconstructor::Dtmof { model, symmetric: false }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Reconstructor::Iterative(_) => "mof",
            Reconstructor::Dtmof { .. } => "dtmof",
        }
    }

    pub fn reconstruct(&self, c_local: &Vec3, vol: f64) -> Result<PlaneCut, MofError> {
        match self {
            Reconstructor::Iterative(opts) => Ok(solve_mof(c_local, vol, opts)?.plane),
            Reconstructor::Dtmof { model, symmetric: false } => dtmof_reconstruct(model, c_local, vol),
            Reconstructor::Dtmof { model, symmetric: true } => dtmof_reconstruct_symmetric(model, c_local, vol),
        }
    }
}
