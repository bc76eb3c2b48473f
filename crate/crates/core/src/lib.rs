//! Moment-of-fluid interface reconstruction in unit-cube cells.
//!
//! - [`geom`]: exact plane/cube geometry (forward moments, offset solve).
//! - [`mofopt`]: iterative reconstruction by damped Gauss–Newton.
//! - [`datagen`]: synthetic plane-cut datasets for the angle corrector.
//! - [`dtree`]: regression tree predicting angle corrections, and the
//!   tree-based reconstruction built on it.
//! - [`advect`]: directionally split transport of volume fraction and
//!   centroid with pluggable reconstruction.

pub mod geom;
pub mod advect;
pub mod datagen;
pub mod dtree;
pub mod mofopt;

pub use geom::{AnglePair, CellMoments, PlaneCut, Vec3};
