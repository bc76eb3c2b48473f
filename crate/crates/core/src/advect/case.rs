//! Benchmark cases: setup, time stepping with snapshots, and error norms.

use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::sweep::{step, FaceVelocities};
use super::{init_field, AdvectError, Grid, MaterialField, Reconstructor, Shape, SweepStats, VelocityField};
use crate::geom::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseKind {
    Translation,
    Zalesak,
    Deformation,
}

impl CaseKind {
    pub const ALL: [CaseKind; 3] = [CaseKind::Translation, CaseKind::Zalesak, CaseKind::Deformation];

    pub fn name(&self) -> &'static str {
        match self {
            CaseKind::Translation => "translation",
            CaseKind::Zalesak => "zalesak",
            CaseKind::Deformation => "deformation",
        }
    }
}

impl std::str::FromStr for CaseKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CaseKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown case '{s}' (expected translation, zalesak or deformation)"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub kind: CaseKind,
    pub shape: Shape,
    pub velocity: VelocityField,
    pub resolution: usize,
    pub t_final: f64,
    pub cfl: f64,
}

impl CaseSpec {
    /// The standard setup of each benchmark at `n³` cells.
    pub fn standard(kind: CaseKind, n: usize) -> Self {
        let blob = Shape::sphere(Vec3::new(0.35, 0.35, 0.35), 0.15);
        let (shape, velocity, t_final) = match kind {
            CaseKind::Translation => (blob, VelocityField::translation(Vec3::new(1.0, 1.0, 1.0)), 1.0),
            CaseKind::Zalesak => (Shape::zalesak_sphere(), VelocityField::zalesak(), 0.5),
            CaseKind::Deformation => (blob, VelocityField::deformation(3.0), 3.0),
        };
        Self {
            kind,
            shape,
            velocity,
            resolution: n,
            t_final,
            cfl: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), AdvectError> {
        if self.resolution == 0 {
            return Err(AdvectError::BadCase("resolution must be positive".into()));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(AdvectError::BadCase(format!("cfl {} outside (0, 1]", self.cfl)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(AdvectError::BadCase(format!("t_final {} is not a valid time", self.t_final)));
        }
        self.reference_shape().map(|_| ())
    }

    /// The exact material region at `t_final`.
    pub fn reference_shape(&self) -> Result<Shape, AdvectError> {
        let t = self.t_final;
        match self.velocity {
            VelocityField::Translation { velocity } => Ok(self.shape.clone().shifted(Vec3::from(velocity) * t)),
            VelocityField::Rotation { omega, w, .. } => {
                let turns = omega * t / (2.0 * PI);
                if (turns - turns.round()).abs() > 1e-9 {
                    return Err(AdvectError::BadCase(format!(
                        "rotation reference needs whole revolutions, got {turns}"
                    )));
                }
                Ok(self.shape.clone().shifted(Vec3::new(0.0, 0.0, w * t)))
            }
            VelocityField::Deformation { period } => {
                if t != 0.0 && t != period {
                    return Err(AdvectError::BadCase(format!(
                        "deformation reference exists only at t = 0 or t = {period}"
                    )));
                }
                Ok(self.shape.clone())
            }
        }
    }

    /// Step count (even, so one step ends at `t_final / 2`) and step size.
    pub fn time_steps(&self) -> (usize, f64) {
        if self.t_final == 0.0 {
            return (0, 0.0);
        }
        let h = 1.0 / self.resolution as f64;
        let umax = self.velocity.max_face_speed(self.resolution);
        let dt_max = self.cfl * h / umax.max(f64::MIN_POSITIVE);
        let mut steps = ((self.t_final / dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        steps += steps % 2;
        (steps, self.t_final / steps as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `∑|f − f⁰| / ∑ f⁰`.
    pub e_r: f64,
    /// Mismatch volume `h³ ∑|f − f⁰|`.
    pub e_g: f64,
}

/// Error norms of `field` against `reference`.
pub fn compute_errors(field: &MaterialField, reference: &MaterialField) -> Result<ErrorReport, AdvectError> {
    if field.grid.n != reference.grid.n {
        return Err(AdvectError::GridMismatch(field.grid.n, reference.grid.n));
    }
    let mass: f64 = reference.vol.iter().sum();
    if mass <= 0.0 {
        return Err(AdvectError::EmptyReference);
    }
    let diff: f64 = field.vol.iter().zip(&reference.vol).map(|(a, b)| (a - b).abs()).sum();
    Ok(ErrorReport {
        e_r: diff / mass,
        e_g: diff * field.grid.cell_volume(),
    })
}

/// Observed order between a coarse and a fine run,
/// `log(E_coarse / E_fine) / log(n_fine / n_coarse)`; for a doubling this is
/// `log₂` of the error ratio.
pub fn convergence_order(e_coarse: f64, n_coarse: usize, e_fine: f64, n_fine: usize) -> f64 {
    (e_coarse / e_fine).ln() / (n_fine as f64 / n_coarse as f64).ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub label: &'static str,
    pub field: MaterialField,
}

#[derive(Clone, Debug)]
pub struct CaseResult {
    pub spec: CaseSpec,
    pub reconstructor: &'static str,
    pub errors: ErrorReport,
    pub steps: usize,
    pub dt: f64,
    pub initial_volume: f64,
    pub final_volume: f64,
    /// Totals over the run.
    pub stats: SweepStats,
    pub runtime_s: f64,
    /// Fields at `t = 0`, `T/2` and `T`.
    pub snapshots: Vec<Snapshot>,
}

impl CaseResult {
    /// `|∑C h³(T) − ∑C h³(0)| / ∑C h³(0)`.
    pub fn volume_drift(&self) -> f64 {
        (self.final_volume - self.initial_volume).abs() / self.initial_volume
    }

    /// Net clipped volume relative to the initial volume.
    pub fn clipped_fraction(&self) -> f64 {
        let h3 = (1.0 / self.spec.resolution as f64).powi(3);
        self.stats.net_clipped().abs() * h3 / self.initial_volume
    }

    pub fn final_field(&self) -> &MaterialField {
        &self.snapshots.last().expect("snapshots are never empty").field
    }
}

/// Run a case to `t_final` and score it against the exact final shape.
pub fn run_case(spec: &CaseSpec, rec: &Reconstructor) -> Result<CaseResult, AdvectError> {
    spec.validate()?;
    let grid = Grid::new(spec.resolution);
    let reference = init_field(&grid, &spec.reference_shape()?);
    let mut field = init_field(&grid, &spec.shape);
    let initial_volume = field.total_volume();
    let (steps, dt) = spec.time_steps();
    let faces = FaceVelocities::new(&spec.velocity, &grid);

    let mut snapshots = vec![Snapshot {
        label: "t0",
        field: field.clone(),
    }];
    let mut stats = SweepStats::default();
    let start = Instant::now();
    for k in 0..steps {
        stats.add(&step(&mut field, &spec.velocity, &faces, dt, k % 2 == 0, rec)?);
        if k + 1 == steps / 2 {
            snapshots.push(Snapshot {
                label: "half",
                field: field.clone(),
            });
        }
    }
    let runtime_s = start.elapsed().as_secs_f64();
    if steps == 0 {
        snapshots.push(Snapshot {
            label: "half",
            field: field.clone(),
        });
    }
    field.time = spec.t_final;
    let errors = compute_errors(&field, &reference)?;
    let final_volume = field.total_volume();
    snapshots.push(Snapshot { label: "end", field });

    Ok(CaseResult {
        spec: spec.clone(),
        reconstructor: rec.name(),
        errors,
        steps,
        dt,
        initial_volume,
        final_volume,
        stats,
        runtime_s,
        snapshots,
    })
}
