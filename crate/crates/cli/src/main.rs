use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mofkit_cli::config::{layout, output_root, AdvectConfig, BenchConfig, DataConfig, Method, RunConfig, TrainConfig};
use mofkit_cli::pipeline::{self, Manifest};
use mofkit_cli::records::{write_csv, BENCH_HEADER, EVAL_HEADER};
use mofkit_cli::{exit_code, stages, UsageError, EXIT_OK, EXIT_USAGE};
use mofkit_core::advect::{CaseKind, CaseSpec};
use mofkit_core::datagen::AngleDistribution;
use mofkit_core::geom::Vec3;
use mofkit_core::mofopt::SolverOptions;
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "mofkit", version, about = "Moment-of-fluid reconstruction, decision-tree training and advection benchmarks")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of random plane cuts.
    GenData(GenDataArgs),
    /// Fit a regression tree on a dataset.
    Train(TrainArgs),
    /// Score a model on a dataset.
    EvalModel(EvalArgs),
    /// Reconstruct one cell from its centroid and volume fraction.
    Reconstruct(ReconstructArgs),
    /// Run advection benchmarks.
    Advect(AdvectArgs),
    /// Time iterative MOF against DTMOF on identical inputs.
    Bench(BenchArgs),
    /// Run every stage from a config or manifest.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Training samples, written to `train.mofd`.
    #[arg(long, default_value_t = DataConfig::default().train_size)]
    n: usize,
    #[arg(long, default_value_t = DataConfig::default().train_seed)]
    seed: u64,
    /// Test samples, written to `test.mofd` (0 skips the test set).
    #[arg(long, default_value_t = 0)]
    test_n: usize,
    #[arg(long, default_value_t = DataConfig::default().test_seed)]
    test_seed: u64,
    #[arg(long, default_value_t = DataConfig::default().c_min)]
    c_min: f64,
    #[arg(long, default_value_t = DataConfig::default().c_max)]
    c_max: f64,
    #[arg(long, value_enum, default_value_t = Dist::Uniform)]
    distribution: Dist,
    /// Output directory [env: MOFKIT_OUT, default: ./mofkit-out].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dist {
    Uniform,
    AreaUniform,
}

#[derive(Args)]
struct TrainArgs {
    /// Training set [default: <output root>/train.mofd].
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model file to write [default: <output root>/model.moft].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = TrainConfig::default().max_depth)]
    max_depth: usize,
    #[arg(long, default_value_t = TrainConfig::default().min_samples_leaf)]
    min_leaf: usize,
    #[arg(long, default_value_t = TrainConfig::default().n_bins)]
    bins: usize,
    /// Search every distinct threshold instead of histogram bins.
    #[arg(long)]
    exact_splits: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// Test set [default: <output root>/test.mofd].
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    report: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Reference centroid `x,y,z` in unit-cell coordinates.
    #[arg(long = "c", value_name = "X,Y,Z")]
    centroid: String,
    /// Reference volume fraction.
    #[arg(long = "C", value_name = "FRACTION", allow_hyphen_values = true)]
    fraction: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Iter)]
    method: MethodArg,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum MethodArg {
    #[value(alias = "mof")]
    Iter,
    Dtmof,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Iter => Method::Mof,
            MethodArg::Dtmof => Method::Dtmof,
        }
    }
}

#[derive(Args)]
struct AdvectArgs {
    /// Case spec file; overrides --case and --resolution.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values = ["translation", "zalesak", "deformation"])]
    case: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = AdvectConfig::default().resolutions)]
    resolution: Vec<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["iter", "dtmof"])]
    reconstructor: Vec<MethodArg>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = AdvectConfig::default().cfl)]
    cfl: f64,
    #[arg(long, default_value_t = AdvectConfig::default().mof_max_iter)]
    mof_max_iter: usize,
    #[arg(long)]
    no_snapshots: bool,
    /// Output directory [env: MOFKIT_OUT, default: ./mofkit-out].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = BenchConfig::default().samples)]
    samples: usize,
    #[arg(long, default_value_t = BenchConfig::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = BenchConfig::default().tol)]
    tol: f64,
    #[arg(long, default_value_t = BenchConfig::default().max_iter)]
    max_iter: usize,
    /// Skip the multi-threaded throughput rows.
    #[arg(long)]
    single_only: bool,
    /// Output directory [env: MOFKIT_OUT, default: ./mofkit-out].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Config file; all omitted keys take their defaults.
    #[arg(long, conflicts_with = "manifest")]
    config: Option<PathBuf>,
    /// Re-run the config recorded in a manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// With --manifest, fail unless every recorded output is reproduced.
    #[arg(long, requires = "manifest")]
    check: bool,
    /// Output directory [env: MOFKIT_OUT, default: ./mofkit-out].
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A single case read from a spec file.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseFile {
    case: CaseSpec,
    #[serde(default = "default_methods")]
    reconstructors: Vec<Method>,
    model: Option<PathBuf>,
    #[serde(default)]
    mof_max_iter: Option<usize>,
    #[serde(default = "yes")]
    snapshots: bool,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Mof]
}

fn yes() -> bool {
    true
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_vec3(s: &str) -> Result<Vec3> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("expected three comma-separated numbers, got '{s}'")))?;
    if parts.len() != 3 {
        return Err(usage(format!("expected three comma-separated numbers, got '{s}'")));
    }
    Ok(Vec3::new(parts[0], parts[1], parts[2]))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::GenData(a) => {
            let cfg = DataConfig {
                c_min: a.c_min,
                c_max: a.c_max,
                distribution: match a.distribution {
                    Dist::Uniform => AngleDistribution::Uniform,
                    Dist::AreaUniform => AngleDistribution::AreaUniform,
                },
                ..DataConfig::default()
            };
            if !(cfg.c_min > 0.0 && cfg.c_max < 1.0 && cfg.c_min <= cfg.c_max) {
                return Err(usage(format!("need 0 < c-min <= c-max < 1, got [{}, {}]", cfg.c_min, cfg.c_max)));
            }
            let root = output_root(a.out);
            ensure_dir(&root)?;
            for (name, n, seed) in [(layout::TRAIN_DATA, a.n, a.seed), (layout::TEST_DATA, a.test_n, a.test_seed)] {
                if n == 0 && name == layout::TEST_DATA {
                    continue;
                }
                let path = root.join(name);
                mofkit_core::datagen::generate_dataset(n, seed, &cfg.sampler(), &path)
                    .with_context(|| format!("generating {}", path.display()))?;
                println!("{}", path.display());
            }
        }
        Command::Train(a) => {
            let cfg = TrainConfig {
                max_depth: a.max_depth,
                min_samples_leaf: a.min_leaf,
                n_bins: a.bins,
                exact_splits: a.exact_splits,
                ..TrainConfig::default()
            };
            cfg.params().validate().map_err(|e| usage(e.to_string()))?;
            let root = output_root(None);
            let data = a.data.unwrap_or_else(|| root.join(layout::TRAIN_DATA));
            let model = a.out.unwrap_or_else(|| root.join(layout::MODEL));
            if let Some(dir) = model.parent().filter(|d| !d.as_os_str().is_empty()) {
                ensure_dir(dir)?;
            }
            stages::train(&cfg, &data, &model)?;
            println!("{}", model.display());
        }
        Command::EvalModel(a) => {
            let root = output_root(None);
            let model = a.model.unwrap_or_else(|| root.join(layout::MODEL));
            let data = a.data.unwrap_or_else(|| root.join(layout::TEST_DATA));
            let r = stages::evaluate(&model, &data)?;
            match a.report {
                Format::Text => {
                    println!("samples      {}", r.samples);
                    println!("train R²     {:.6}", r.train_r2);
                    println!("test R²      {:.6} (phi {:.6}, theta {:.6})", r.r2, r.r2_phi, r.r2_theta);
                    println!("centroid L1  {:.6e}", r.centroid_l1);
                    println!("leaves       {}", r.leaf_count);
                    println!("depth        {}", r.depth);
                    println!("model bytes  {}", r.model_bytes);
                }
                Format::Csv => {
                    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(std::io::stdout());
                    w.write_record(EVAL_HEADER.split(','))?;
                    w.serialize(&r)?;
                    w.flush()?;
                }
            }
        }
        Command::Reconstruct(a) => {
            let c = parse_vec3(&a.centroid)?;
            let method = Method::from(a.method);
            if !(a.fraction > 0.0 && a.fraction < 1.0) {
                return Err(usage(format!(
                    "--C {} is a full/empty cell; the volume fraction must lie strictly between 0 and 1",
                    a.fraction
                )));
            }
            if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(usage(format!("--c {} lies outside the unit cell", a.centroid)));
            }
            let model = match (method, &a.model) {
                (Method::Dtmof, None) => return Err(usage("--method dtmof needs --model")),
                (Method::Dtmof, Some(p)) => Some(stages::load_model(p)?),
                _ => None,
            };
            let r = stages::reconstruct_cell(c, a.fraction, method, model.as_ref(), &SolverOptions::default())?;
            let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
            match a.format {
                Format::Text => {
                    println!("method     {}", method.name());
                    println!("normal     {:.12} {:.12} {:.12}", r.normal.x, r.normal.y, r.normal.z);
                    println!("alpha      {:.12}", r.alpha);
                    println!("centroid   {:.12} {:.12} {:.12}", r.centroid.x, r.centroid.y, r.centroid.z);
                    println!("residual   {:.6e}", r.residual);
                    match (r.iterations, r.leaf) {
                        (Some(i), _) => println!("iterations {i}"),
                        (_, Some(l)) => println!("leaf       {l}"),
                        _ => {}
                    }
                }
                Format::Csv => {
                    println!("method,nx,ny,nz,alpha,cx,cy,cz,residual,iterations,leaf");
                    println!(
                        "{},{},{},{},{},{},{},{},{},{},{}",
                        method.name(),
                        r.normal.x,
                        r.normal.y,
                        r.normal.z,
                        r.alpha,
                        r.centroid.x,
                        r.centroid.y,
                        r.centroid.z,
                        r.residual,
                        opt(r.iterations),
                        opt(r.leaf)
                    );
                }
            }
        }
        Command::Advect(a) => {
            let (specs, methods, cfg, model_path) = match &a.spec {
                Some(path) => {
                    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    let file: CaseFile = toml::from_str(&text)
                        .map_err(|e| usage(format!("invalid case spec {}: {e}", path.display())))?;
                    file.case.validate().map_err(|e| usage(e.to_string()))?;
                    let cfg = AdvectConfig {
                        mof_max_iter: file.mof_max_iter.unwrap_or(a.mof_max_iter),
                        snapshots: file.snapshots && !a.no_snapshots,
                        ..AdvectConfig::default()
                    };
                    let name = file.case.kind.name().to_string();
                    (vec![(name, file.case)], file.reconstructors, cfg, file.model.or(a.model.clone()))
                }
                None => {
                    let cases = a
                        .case
                        .iter()
                        .map(|c| c.parse::<CaseKind>().map_err(usage))
                        .collect::<Result<Vec<_>>>()?;
                    let cfg = AdvectConfig {
                        cases,
                        resolutions: a.resolution.clone(),
                        reconstructors: a.reconstructor.iter().map(|&m| m.into()).collect(),
                        cfl: a.cfl,
                        mof_max_iter: a.mof_max_iter,
                        snapshots: !a.no_snapshots,
                    };
                    RunConfig {
                        advect: cfg.clone(),
                        ..RunConfig::default()
                    }
                    .validate()
                    .map_err(|e| usage(e.to_string()))?;
                    let specs = stages::suite_specs(&cfg, &cfg.cases);
                    (specs, cfg.reconstructors.clone(), cfg, a.model.clone())
                }
            };
            let model = if methods.contains(&Method::Dtmof) {
                let path = model_path.unwrap_or_else(|| output_root(a.out.clone()).join(layout::MODEL));
                Some(Arc::new(stages::load_model(&path).context("advect with dtmof")?))
            } else {
                None
            };
            let root = output_root(a.out.clone());
            ensure_dir(&root)?;
            let outcome = stages::advect_specs(&specs, &methods, &cfg, model.as_ref(), &root)?;
            println!("case,resolution,reconstructor,E_r,E_g,O_h,runtime_s");
            for r in &outcome.rows {
                let o_h = r.o_h.map(|v| format!("{v:.4}")).unwrap_or_default();
                println!(
                    "{},{},{},{:.6e},{:.6e},{},{:.2}",
                    r.case, r.resolution, r.reconstructor, r.e_r, r.e_g, o_h, r.runtime_s
                );
            }
        }
        Command::Bench(a) => {
            let cfg = BenchConfig {
                samples: a.samples,
                seed: a.seed,
                tol: a.tol,
                max_iter: a.max_iter,
                parallel: !a.single_only,
            };
            cfg.solver().validate().map_err(|e| usage(e.to_string()))?;
            let root = output_root(a.out);
            ensure_dir(&root)?;
            let inputs = stages::bench_inputs(&cfg, &DataConfig::default())?;
            let rows = if inputs.is_empty() {
                Vec::new()
            } else {
                let model = stages::load_model(&a.model.unwrap_or_else(|| root.join(layout::MODEL)))?;
                stages::bench(&cfg, &inputs, &model)?
            };
            write_csv(&root.join(layout::BENCH_CSV), BENCH_HEADER, &rows)?;
            println!("mode,reconstructor,batch,E_c,wall_s,mean_us,median_us,speedup");
            for r in &rows {
                println!(
                    "{},{},{},{:.3e},{:.3},{:.3},{:.3},{:.2}",
                    r.mode, r.reconstructor, r.batch, r.e_c, r.wall_s, r.mean_us, r.median_us, r.speedup
                );
            }
        }
        Command::Pipeline(a) => {
            let (config, expected) = match (&a.config, &a.manifest) {
                (Some(p), _) => (RunConfig::load(p).map_err(|e| usage(format!("{e:#}")))?, None),
                (None, Some(p)) => {
                    let m = Manifest::load(p).map_err(|e| usage(format!("{e:#}")))?;
                    (m.config.clone(), Some(m))
                }
                (None, None) => (RunConfig::default(), None),
            };
            let root = output_root(a.out);
            let manifest = pipeline::run(&config, &root)?;
            println!("{}", root.join(layout::MANIFEST).display());
            if a.check {
                let expected = expected.expect("--check requires --manifest");
                let bad = pipeline::compare(&expected, &manifest);
                if !bad.is_empty() {
                    anyhow::bail!("outputs not reproduced: {}", bad.join(", "));
                }
                println!("all {} recorded outputs reproduced", expected.outputs.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
