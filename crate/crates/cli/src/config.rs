//! Pipeline configuration: one TOML file with a section per stage. Every
//! field has a pinned default so a partial file resolves to a full config.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mofkit_core::advect::CaseKind;
use mofkit_core::datagen::{AngleDistribution, SamplerConfig};
use mofkit_core::dtree::TreeParams;
use mofkit_core::mofopt::SolverOptions;
use serde::{Deserialize, Serialize};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "MOFKIT_OUT";
pub const DEFAULT_OUT: &str = "mofkit-out";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub train: TrainConfig,
    pub bench: BenchConfig,
    pub advect: AdvectConfig,
}


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_size: usize,
    pub test_size: usize,
    pub train_seed: u64,
    pub test_seed: u64,
    pub c_min: f64,
    pub c_max: f64,
    pub distribution: AngleDistribution,
}

impl Default for DataConfig {
    fn default() -> Self {
        let s = SamplerConfig::default();
        Self {
            train_size: 1_000_000,
            test_size: 100_000,
            train_seed: 1,
            test_seed: 2,
            c_min: s.c_min,
            c_max: s.c_max,
            distribution: s.distribution,
        }
    }
}

impl DataConfig {
    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            c_min: self.c_min,
            c_max: self.c_max,
            distribution: self.distribution,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub n_bins: usize,
    pub exact_splits: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let p = TreeParams::default();
        Self {
            max_depth: p.max_depth,
            min_samples_leaf: p.min_samples_leaf,
            n_bins: p.n_bins,
            exact_splits: p.exact_splits,
            seed: p.seed,
        }
    }
}

impl TrainConfig {
    pub fn params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            n_bins: self.n_bins,
            exact_splits: self.exact_splits,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    /// Also time both reconstructors on the full worker pool.
    pub parallel: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            samples: 100_000,
            seed: 3,
            tol: o.tol,
            max_iter: o.max_iter,
            parallel: true,
        }
    }
}

impl BenchConfig {
    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            ..SolverOptions::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Gauss–Newton iterative MOF.
    Mof,
    /// Decision-tree MOF.
    Dtmof,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Mof => "mof",
            Method::Dtmof => "dtmof",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdvectConfig {
    pub cases: Vec<CaseKind>,
    pub resolutions: Vec<usize>,
    pub reconstructors: Vec<Method>,
    pub cfl: f64,
    /// Iteration cap of the iterative reconstructor inside the sweeps.
    pub mof_max_iter: usize,
    /// Write VTK and OBJ snapshots at `t = 0`, `T/2` and `T`.
    pub snapshots: bool,
}

impl Default for AdvectConfig {
    fn default() -> Self {
        Self {
            cases: CaseKind::ALL.to_vec(),
            resolutions: vec![32, 64],
            reconstructors: vec![Method::Mof, Method::Dtmof],
            cfl: 0.5,
            mof_max_iter: 10,
            snapshots: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if !(d.c_min > 0.0 && d.c_max < 1.0 && d.c_min <= d.c_max) {
            bail!("data: need 0 < c_min <= c_max < 1, got [{}, {}]", d.c_min, d.c_max);
        }
        if d.train_size == 0 || d.test_size == 0 {
            bail!("data: train_size and test_size must be positive");
        }
        self.train.params().validate().context("train")?;
        self.bench.solver().validate().context("bench")?;
        let a = &self.advect;
        if a.resolutions.contains(&0) {
            bail!("advect: resolutions must be positive");
        }
        if !(a.cfl > 0.0 && a.cfl <= 1.0) {
            bail!("advect: cfl {} outside (0, 1]", a.cfl);
        }
        if a.mof_max_iter == 0 {
            bail!("advect: mof_max_iter must be at least 1");
        }
        Ok(())
    }
}

/// `--out` if given, else `$MOFKIT_OUT`, else `./mofkit-out`.
pub fn output_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// File names inside an output directory.
pub mod layout {
    pub const MANIFEST: &str = "manifest.toml";
    pub const TRAIN_DATA: &str = "train.mofd";
    pub const TEST_DATA: &str = "test.mofd";
    pub const MODEL: &str = "model.moft";
    pub const EVAL_CSV: &str = "eval.csv";
    pub const BENCH_CSV: &str = "bench.csv";
    pub const ADVECT_CSV: &str = "advect.csv";
    pub const ADVECT_DIAG_CSV: &str = "advect_diag.csv";
    pub const SNAPSHOT_DIR: &str = "snapshots";
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_resolves_to_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.advect.cases = vec![CaseKind::Zalesak];
        cfg.advect.reconstructors = vec![Method::Dtmof];
        cfg.data.distribution = AngleDistribution::AreaUniform;
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values_and_unknown_keys() {
        assert!(RunConfig::parse("[data]\nc_min = 0.0").is_err());
        assert!(RunConfig::parse("[advect]\ncfl = 1.5").is_err());
        assert!(RunConfig::parse("[train]\nmax_depth = 0").is_err());
        assert!(RunConfig::parse("[trian]\nmax_depth = 3").is_err());
        assert!(RunConfig::parse("[advect]\ncases = [\"vortex\"]").is_err());
    }

    #[test]
    fn committed_example_matches_defaults() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
        assert_eq!(RunConfig::load(&path).unwrap(), RunConfig::default());
    }
}
