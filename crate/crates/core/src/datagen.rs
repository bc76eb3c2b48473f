//! Synthetic training data: random plane cuts of the unit cube turned into
//! (initial-guess angles, volume fraction) → angle-correction samples.
//!
//! On-disk layout (little-endian):
//!
//! ```text
//! "MOFD" | u32 version | u64 count | u64 seed | f64 c_min | f64 c_max
//! count × (phi0, theta0, C, dphi, dtheta) as f64
//! ```

use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{self, wrap_difference, AnglePair, GeomError};
use crate::mofopt::initial_guess;

pub const DATASET_MAGIC: [u8; 4] = *b"MOFD";
pub const DATASET_VERSION: u32 = 1;
pub const HEADER_BYTES: u64 = 40;
pub const RECORD_BYTES: u64 = 5 * 8;

/// Strata per axis of the (φ, θ, C) box used for jittered sampling.
pub const STRATA_PER_AXIS: usize = 16;
const STRATA: usize = STRATA_PER_AXIS * STRATA_PER_AXIS * STRATA_PER_AXIS;
/// Samples per independently seeded chunk; a multiple of the stratum count.
pub const CHUNK: usize = 1 << 16;
const MAX_RESAMPLES: usize = 100;
/// Tolerance of the load-time consistency spot check, in radians.
const SPOT_CHECK_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("not a dataset file (bad magic)")]
    BadMagic,
    #[error("unsupported dataset version {0}")]
    Version(u32),
    #[error("dataset truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("sample {index} fails the round-trip check (error {error:e})")]
    Corrupt { index: usize, error: f64 },
    #[error("centroid at the cell center after {0} resamples")]
    Degenerate(usize),
    #[error("volume fraction {0} must lie strictly inside (0, 1)")]
    BadFraction(f64),
    #[error("invalid sampler bounds [{0}, {1}]")]
    BadBounds(f64, f64),
    #[error("not enough disk space: need {need} bytes, {available} available")]
    DiskSpace { need: u64, available: u64 },
    #[error("empty dataset")]
    Empty,
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// One random cut: features `(phi0, theta0, vol_frac)` and targets
/// `(dphi, dtheta)`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct TrainingSample {
    pub phi0: f64,
    pub theta0: f64,
    pub vol_frac: f64,
    pub dphi: f64,
    pub dtheta: f64,
}

impl TrainingSample {
    #[inline]
    pub fn features(&self) -> [f64; 3] {
        [self.phi0, self.theta0, self.vol_frac]
    }

    #[inline]
    pub fn targets(&self) -> [f64; 2] {
        [self.dphi, self.dtheta]
    }

    pub fn guess(&self) -> AnglePair {
        AnglePair::new(self.phi0, self.theta0)
    }

    /// Angles of the generating cut.
    pub fn true_angles(&self) -> AnglePair {
        AnglePair::wrapped(self.phi0 + self.dphi, self.theta0 + self.dtheta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AngleDistribution {
    /// Uniform in `(φ, θ)`.
    #[default]
    Uniform,
    /// Uniform over the sphere (uniform in `cos φ`).
    AreaUniform,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerConfig {
    pub c_min: f64,
    pub c_max: f64,
    pub distribution: AngleDistribution,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            c_min: 1e-3,
            c_max: 1.0 - 1e-3,
            distribution: AngleDistribution::Uniform,
        }
    }
}

impl SamplerConfig {
    fn validate(&self) -> Result<(), DataError> {
        if self.c_min > 0.0 && self.c_max < 1.0 && self.c_min <= self.c_max {
            Ok(())
        } else {
            Err(DataError::BadBounds(self.c_min, self.c_max))
        }
    }

    /// Map unit-interval coordinates to `(φ, θ, C)`.
    fn map(&self, u: [f64; 3]) -> (AnglePair, f64) {
        let phi = match self.distribution {
            AngleDistribution::Uniform => u[0] * PI,
            AngleDistribution::AreaUniform => (1.0 - 2.0 * u[0]).clamp(-1.0, 1.0).acos(),
        };
        let theta = -PI + u[1] * 2.0 * PI;
        let vol = self.c_min + u[2] * (self.c_max - self.c_min);
        (AnglePair::new(phi, theta), vol)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetHeader {
    pub version: u32,
    pub count: u64,
    pub seed: u64,
    pub c_min: f64,
    pub c_max: f64,
}

impl DatasetHeader {
    pub fn file_bytes(&self) -> u64 {
        HEADER_BYTES + self.count * RECORD_BYTES
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<TrainingSample>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GenerationStats {
    /// Draws thrown away because the centroid sat on the cell center.
    pub resampled: u64,
}

/// Independent draw `φ ~ U[0, π]`, `θ ~ U[-π, π)`, `C ~ U[c_min, c_max]`.
pub fn sample_cut<R: Rng + ?Sized>(rng: &mut R, cfg: &SamplerConfig) -> (AnglePair, f64) {
    let u = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
    cfg.map(u)
}

/// Draw uniformly inside one cell of the 16³ stratification of the
/// `(φ, θ, C)` box. Cycling through the strata keeps every bin's occupancy
/// within one sample of the others while each draw stays uniform.
pub fn sample_cut_stratified<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &SamplerConfig,
    stratum: usize,
) -> (AnglePair, f64) {
    let s = stratum % STRATA;
    let k = STRATA_PER_AXIS;
    let cells = [s % k, (s / k) % k, s / (k * k)];
    let mut u = [0.0; 3];
    for d in 0..3 {
        u[d] = (cells[d] as f64 + rng.gen::<f64>()) / k as f64;
    }
    cfg.map(u)
}

/// Turn a generating cut into a training sample.
pub fn make_sample(true_angles: AnglePair, vol_frac: f64) -> Result<TrainingSample, DataError> {
    if !(vol_frac > 0.0 && vol_frac < 1.0) {
        return Err(DataError::BadFraction(vol_frac));
    }
    let plane = geom::plane_with_volume(&true_angles.normal(), vol_frac)?;
    let m = geom::moments_from_plane(&plane);
    let guess = initial_guess(&m.centroid);
    if guess.degenerate {
        return Err(DataError::Degenerate(0));
    }
    let g = guess.angles;
    Ok(TrainingSample {
        phi0: g.phi,
        theta0: g.theta,
        vol_frac,
        dphi: true_angles.phi - g.phi,
        dtheta: wrap_difference(true_angles.theta - g.theta),
    })
}

fn draw_sample<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &SamplerConfig,
    stratum: usize,
    stats: &mut GenerationStats,
) -> Result<TrainingSample, DataError> {
    for _ in 0..MAX_RESAMPLES {
        let (angles, vol) = sample_cut_stratified(rng, cfg, stratum);
        match make_sample(angles, vol) {
            Ok(s) => return Ok(s),
            Err(DataError::Degenerate(_)) => stats.resampled += 1,
            Err(e) => return Err(e),
        }
    }
    Err(DataError::Degenerate(MAX_RESAMPLES))
}

fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

fn generate_chunk(
    seed: u64,
    chunk: usize,
    len: usize,
    cfg: &SamplerConfig,
) -> Result<(Vec<TrainingSample>, GenerationStats), DataError> {
    let mut rng = chunk_rng(seed, chunk as u64);
    let mut stats = GenerationStats::default();
    let base = chunk * CHUNK;
    let samples = (0..len)
        .map(|i| draw_sample(&mut rng, cfg, base + i, &mut stats))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((samples, stats))
}

/// Chunks of `(index, length)` covering `n` samples.
fn chunks(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n.div_ceil(CHUNK)).map(move |k| (k, CHUNK.min(n - k * CHUNK)))
}

/// Generate `n` samples in memory. Output is a pure function of
/// `(n, seed, cfg)` regardless of the thread count.
pub fn generate(n: usize, seed: u64, cfg: &SamplerConfig) -> Result<(Dataset, GenerationStats), DataError> {
    cfg.validate()?;
    let parts: Vec<_> = chunks(n)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(k, len)| generate_chunk(seed, k, len, cfg))
        .collect::<Result<_, _>>()?;
    let mut samples = Vec::with_capacity(n);
    let mut stats = GenerationStats::default();
    for (part, s) in parts {
        samples.extend(part);
        stats.resampled += s.resampled;
    }
    let header = DatasetHeader {
        version: DATASET_VERSION,
        count: n as u64,
        seed,
        c_min: cfg.c_min,
        c_max: cfg.c_max,
    };
    Ok((Dataset { header, samples }, stats))
}

/// Stream `n` samples straight to `path`, generating a batch of chunks in
/// parallel and writing them in order.
pub fn generate_dataset(
    n: usize,
    seed: u64,
    cfg: &SamplerConfig,
    path: &Path,
) -> Result<(DatasetHeader, GenerationStats), DataError> {
    cfg.validate()?;
    let header = DatasetHeader {
        version: DATASET_VERSION,
        count: n as u64,
        seed,
        c_min: cfg.c_min,
        c_max: cfg.c_max,
    };
    check_disk_space(path, header.file_bytes())?;

    let mut out = BufWriter::new(File::create(path)?);
    write_header(&mut out, &header)?;
    let mut stats = GenerationStats::default();
    let all: Vec<_> = chunks(n).collect();
    let batch = rayon::current_num_threads().max(1) * 2;
    for group in all.chunks(batch) {
        let parts: Vec<_> = group
            .par_iter()
            .map(|&(k, len)| generate_chunk(seed, k, len, cfg))
            .collect::<Result<_, _>>()?;
        for (part, s) in parts {
            stats.resampled += s.resampled;
            for sample in &part {
                write_record(&mut out, sample)?;
            }
        }
    }
    out.flush()?;
    Ok((header, stats))
}

fn check_disk_space(path: &Path, need: u64) -> Result<(), DataError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if let Ok(available) = fs2::available_space(dir) {
        if available < need {
            return Err(DataError::DiskSpace { need, available });
        }
    }
    Ok(())
}

fn write_header<W: Write>(w: &mut W, h: &DatasetHeader) -> io::Result<()> {
    w.write_all(&DATASET_MAGIC)?;
    w.write_u32::<LittleEndian>(h.version)?;
    w.write_u64::<LittleEndian>(h.count)?;
    w.write_u64::<LittleEndian>(h.seed)?;
    w.write_f64::<LittleEndian>(h.c_min)?;
    w.write_f64::<LittleEndian>(h.c_max)
}

fn write_record<W: Write>(w: &mut W, s: &TrainingSample) -> io::Result<()> {
    for v in [s.phi0, s.theta0, s.vol_frac, s.dphi, s.dtheta] {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<(), DataError> {
    check_disk_space(path, ds.header.file_bytes())?;
    let mut out = BufWriter::new(File::create(path)?);
    let header = DatasetHeader {
        count: ds.samples.len() as u64,
        ..ds.header
    };
    write_header(&mut out, &header)?;
    for s in &ds.samples {
        write_record(&mut out, s)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_header<R: Read>(r: &mut R) -> Result<DatasetHeader, DataError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != DATASET_MAGIC {
        return Err(DataError::BadMagic);
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != DATASET_VERSION {
        return Err(DataError::Version(version));
    }
    Ok(DatasetHeader {
        version,
        count: r.read_u64::<LittleEndian>()?,
        seed: r.read_u64::<LittleEndian>()?,
        c_min: r.read_f64::<LittleEndian>()?,
        c_max: r.read_f64::<LittleEndian>()?,
    })
}

/// Load a dataset and spot-check every hundredth record.
pub fn read_dataset(path: &Path) -> Result<Dataset, DataError> {
    let file = File::open(path)?;
    let found = file.metadata()?.len();
    let mut r = BufReader::new(file);
    let header = read_header(&mut r)?;
    let expected = header.file_bytes();
    if found != expected {
        return Err(DataError::Truncated { expected, found });
    }
    let mut samples = Vec::with_capacity(header.count as usize);
    let mut rec = [0f64; 5];
    for _ in 0..header.count {
        r.read_f64_into::<LittleEndian>(&mut rec)?;
        samples.push(TrainingSample {
            phi0: rec[0],
            theta0: rec[1],
            vol_frac: rec[2],
            dphi: rec[3],
            dtheta: rec[4],
        });
    }
    let ds = Dataset { header, samples };
    spot_check(&ds, 100)?;
    Ok(ds)
}

/// Angle between the stored guess direction and the guess recomputed from
/// the cut that the stored angles describe.
pub fn round_trip_error(s: &TrainingSample) -> Result<f64, DataError> {
    let plane = geom::plane_with_volume(&s.true_angles().normal(), s.vol_frac)?;
    let c = geom::moments_from_plane(&plane).centroid;
    let recomputed = initial_guess(&c).angles.normal();
    let stored = s.guess().normal();
    Ok(recomputed.cross(&stored).norm().atan2(recomputed.dot(&stored)))
}

pub fn spot_check(ds: &Dataset, stride: usize) -> Result<(), DataError> {
    let stride = stride.max(1);
    (0..ds.samples.len())
        .into_par_iter()
        .step_by(stride)
        .try_for_each(|index| {
            let error = round_trip_error(&ds.samples[index])?;
            if error <= SPOT_CHECK_TOL {
                Ok(())
            } else {
                Err(DataError::Corrupt { index, error })
            }
        })
}
