//! End-to-end run: gen-data → train → eval-model → bench → advect, with a
//! manifest that records the resolved config and a content hash of every
//! output.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::{layout, RunConfig};
use crate::records::{content_hash, write_csv, BENCH_HEADER, CSV_SCHEMA};
use crate::stages;

pub const STAGES: [&str; 5] = ["gen-data", "train", "eval-model", "bench", "advect"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub stage: String,
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    /// SHA-256 of the content; CSV timing columns are blanked first.
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub csv_schema: u32,
    /// Stages finished so far, in order.
    pub completed: Vec<String>,
    pub config: RunConfig,
    #[serde(default)]
    pub outputs: Vec<OutputEntry>,
}

impl Manifest {
    pub fn new(config: RunConfig) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            csv_schema: CSV_SCHEMA,
            completed: Vec::new(),
            config,
            outputs: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let m: Manifest = toml::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        m.config.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)?;
        std::fs::write(path, text).with_context(|| format!("writing manifest {}", path.display()))
    }

    fn record(&mut self, stage: &str, root: &Path, files: &[PathBuf]) -> Result<()> {
        for f in files {
            self.outputs.push(OutputEntry {
                stage: stage.into(),
                path: f.clone(),
                sha256: content_hash(&root.join(f))?,
            });
        }
        self.completed.push(stage.into());
        Ok(())
    }
}

/// Outputs of `current` whose hash differs from, or is missing in,
/// `expected`.
pub fn compare(expected: &Manifest, current: &Manifest) -> Vec<String> {
    let mut bad = Vec::new();
    for e in &expected.outputs {
        match current.outputs.iter().find(|c| c.path == e.path) {
            Some(c) if c.sha256 == e.sha256 => {}
            Some(_) => bad.push(format!("{} differs", e.path.display())),
            None => bad.push(format!("{} was not produced", e.path.display())),
        }
    }
    bad
}

/// Run every stage into `out`. The manifest is rewritten after each stage,
/// so a failure leaves the finished stages' outputs and records in place.
pub fn run(config: &RunConfig, out: &Path) -> Result<Manifest> {
    config.validate()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let manifest_path = out.join(layout::MANIFEST);
    let mut manifest = Manifest::new(config.clone());
    manifest.save(&manifest_path)?;

    let stage = |name: &str, m: &mut Manifest, files: Vec<PathBuf>| -> Result<()> {
        m.record(name, out, &files)?;
        m.save(&manifest_path)
    };

    let files = stages::gen_data(&config.data, out).context("stage gen-data")?;
    stage("gen-data", &mut manifest, files)?;

    let model_path = out.join(layout::MODEL);
    let model = stages::train(&config.train, &out.join(layout::TRAIN_DATA), &model_path).context("stage train")?;
    stage("train", &mut manifest, vec![PathBuf::from(layout::MODEL)])?;

    stages::eval_model(&model_path, &out.join(layout::TEST_DATA), &out.join(layout::EVAL_CSV))
        .context("stage eval-model")?;
    stage("eval-model", &mut manifest, vec![PathBuf::from(layout::EVAL_CSV)])?;

    let inputs = stages::bench_inputs(&config.bench, &config.data).context("stage bench")?;
    let rows = stages::bench(&config.bench, &inputs, &model).context("stage bench")?;
    write_csv(&out.join(layout::BENCH_CSV), BENCH_HEADER, &rows)?;
    stage("bench", &mut manifest, vec![PathBuf::from(layout::BENCH_CSV)])?;

    if !model_path.exists() {
        bail!("stage advect: model artifact {} is missing", model_path.display());
    }
    let model = Arc::new(stages::load_model(&model_path).context("stage advect")?);
    let specs = stages::suite_specs(&config.advect, &config.advect.cases);
    let outcome = stages::advect_specs(&specs, &config.advect.reconstructors, &config.advect, Some(&model), out)
        .context("stage advect")?;
    stage("advect", &mut manifest, outcome.written)?;
    Ok(manifest)
}
