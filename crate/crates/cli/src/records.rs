//! CSV tables. Column sets are part of the output contract; bump
//! [`CSV_SCHEMA`] whenever one changes.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const CSV_SCHEMA: u32 = 1;

pub const ADVECT_HEADER: &str = "case,resolution,reconstructor,E_r,E_g,O_h,runtime_s";
pub const ADVECT_DIAG_HEADER: &str =
    "case,resolution,reconstructor,steps,dt,initial_volume,final_volume,volume_drift,clipped_low,clipped_high,reconstructions,runtime_s";
pub const BENCH_HEADER: &str =
    "mode,reconstructor,batch,threads,failures,unconverged,E_c,wall_s,mean_us,median_us,speedup";
pub const EVAL_HEADER: &str =
    "samples,train_r2,r2,r2_phi,r2_theta,centroid_l1,leaf_count,node_count,depth,model_bytes,predict_s,reconstruct_s";

/// One row of the advection error table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvectRecord {
    pub case: String,
    pub resolution: usize,
    pub reconstructor: String,
    #[serde(rename = "E_r")]
    pub e_r: f64,
    #[serde(rename = "E_g")]
    pub e_g: f64,
    /// Order against the next coarser resolution of the same case and
    /// reconstructor; empty for the coarsest.
    #[serde(rename = "O_h")]
    pub o_h: Option<f64>,
    pub runtime_s: f64,
}

/// Conservation and clipping totals of one advection run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvectDiagRecord {
    pub case: String,
    pub resolution: usize,
    pub reconstructor: String,
    pub steps: usize,
    pub dt: f64,
    pub initial_volume: f64,
    pub final_volume: f64,
    pub volume_drift: f64,
    pub clipped_low: f64,
    pub clipped_high: f64,
    pub reconstructions: u64,
    pub runtime_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    /// `single` (one worker) or `parallel`.
    pub mode: String,
    pub reconstructor: String,
    pub batch: usize,
    pub threads: usize,
    pub failures: usize,
    /// Iterative solves that stopped before reaching the tolerance.
    pub unconverged: usize,
    /// Mean L₁ distance between the reconstructed and reference centroids.
    #[serde(rename = "E_c")]
    pub e_c: f64,
    pub wall_s: f64,
    pub mean_us: f64,
    pub median_us: f64,
    /// Baseline wall time over this row's wall time, within the same mode.
    pub speedup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub samples: usize,
    pub train_r2: f64,
    pub r2: f64,
    pub r2_phi: f64,
    pub r2_theta: f64,
    pub centroid_l1: f64,
    pub leaf_count: usize,
    pub node_count: usize,
    pub depth: usize,
    pub model_bytes: u64,
    pub predict_s: f64,
    pub reconstruct_s: f64,
}

/// Columns that hold wall-clock measurements, per table header.
pub fn timing_columns(header: &str) -> &'static [&'static str] {
    match header {
        ADVECT_HEADER | ADVECT_DIAG_HEADER => &["runtime_s"],
        BENCH_HEADER => &["wall_s", "mean_us", "median_us", "speedup"],
        EVAL_HEADER => &["predict_s", "reconstruct_s"],
        _ => &[],
    }
}

pub fn write_csv<T: Serialize>(path: &Path, header: &str, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

/// The CSV with every timing column blanked, so two runs can be compared
/// byte for byte.
pub fn strip_timings(text: &str) -> String {
    let mut lines = text.lines();
    let Some(header) = lines.next() else {
        return String::new();
    };
    let timing = timing_columns(header);
    let blank: Vec<bool> = header.split(',').map(|c| timing.contains(&c)).collect();
    let mut out = String::with_capacity(text.len());
    out.push_str(header);
    out.push('\n');
    for line in lines {
        let fields: Vec<&str> = line
            .split(',')
            .enumerate()
            .map(|(k, f)| if blank.get(k).copied().unwrap_or(false) { "" } else { f })
            .collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// SHA-256 of a file's deterministic content: CSVs are hashed with their
/// timing columns blanked, everything else byte for byte.
pub fn content_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let digest = if path.extension().is_some_and(|e| e == "csv") {
        Sha256::digest(strip_timings(&String::from_utf8_lossy(&bytes)).as_bytes())
    } else {
        Sha256::digest(&bytes)
    };
    Ok(format!("{digest:x}"))
}
