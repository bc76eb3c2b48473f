//! Multi-output regression tree mapping `(φ₀, θ₀, C)` to the angle
//! correction `(Δφ, Δθ)`, and the one-shot reconstruction built on it.
//!
//! The split metric treats `Δθ` as a plain number, so targets near the
//! `θ = ±π` seam are regressed without periodic wrap-around.

mod fit;
mod io;

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::datagen::{Dataset, TrainingSample};
use crate::geom::{self, AnglePair, CellMoments, PlaneCut, Vec3};
use crate::mofopt::{check_fraction, initial_guess, MofError};

pub use io::{MODEL_MAGIC, MODEL_VERSION, NODE_BYTES};

/// Marks a leaf in [`Node::feature`].
pub const LEAF: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("feature/target length mismatch ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("dataset too large for 32-bit indices ({0} samples)")]
    TooLarge(usize),
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("invalid tree parameters: {0}")]
    BadParams(&'static str),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model version {0}")]
    Version(u32),
    #[error("model file truncated")]
    Truncated,
    #[error("model checksum mismatch")]
    Checksum,
    #[error("malformed model: {0}")]
    Malformed(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub n_bins: usize,
    /// Scan every distinct value instead of histogram bins.
    pub exact_splits: bool,
    /// Recorded for provenance; ties are broken by feature index and
    /// threshold, so it does not influence the fit.
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 20,
            min_samples_leaf: 4,
            n_bins: 256,
            exact_splits: false,
            seed: 0,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<(), TreeError> {
        if self.max_depth == 0 {
            return Err(TreeError::BadParams("max_depth must be at least 1"));
        }
        if self.max_depth > 64 {
            return Err(TreeError::BadParams("max_depth must be at most 64"));
        }
        if self.min_samples_leaf == 0 {
            return Err(TreeError::BadParams("min_samples_leaf must be at least 1"));
        }
        if self.n_bins < 2 {
            return Err(TreeError::BadParams("n_bins must be at least 2"));
        }
        Ok(())
    }
}

/// Flat tree node. Internal nodes send `x[feature] <= threshold` left.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node {
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    /// Mean training target of the samples reaching this node.
    pub value: [f64; 2],
    pub count: u64,
}

impl Node {
    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct TrainingMeta {
    pub dataset_seed: u64,
    pub dataset_size: u64,
    pub train_r2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeModel {
    nodes: Vec<Node>,
    params: TreeParams,
    meta: TrainingMeta,
}

impl TreeModel {
    /// Fit on a dataset. The training R² is stored in the model metadata.
    pub fn fit(ds: &Dataset, params: &TreeParams) -> Result<Self, TreeError> {
        let mut model = Self::fit_samples(&ds.samples, params)?;
        model.meta.dataset_seed = ds.header.seed;
        Ok(model)
    }

    pub fn fit_samples(samples: &[TrainingSample], params: &TreeParams) -> Result<Self, TreeError> {
        let x: Vec<[f64; 3]> = samples.iter().map(TrainingSample::features).collect();
        let y: Vec<[f64; 2]> = samples.iter().map(TrainingSample::targets).collect();
        let mut model = Self::fit_arrays(&x, &y, params)?;
        let pred = model.predict_batch(&x);
        model.meta.train_r2 = r2_scores(&y, &pred).0;
        Ok(model)
    }

    /// Fit on raw feature and target rows.
    pub fn fit_arrays(x: &[[f64; 3]], y: &[[f64; 2]], params: &TreeParams) -> Result<Self, TreeError> {
        let nodes = fit::Builder::new(x, y, params)?.build();
        Ok(Self {
            nodes,
            params: *params,
            meta: TrainingMeta {
                dataset_size: x.len() as u64,
                ..TrainingMeta::default()
            },
        })
    }

    pub(crate) fn from_parts(nodes: Vec<Node>, params: TreeParams, meta: TrainingMeta) -> Result<Self, TreeError> {
        validate_nodes(&nodes)?;
        Ok(Self { nodes, params, meta })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut max = 0;
        // children always follow their parent in the array
        for (i, n) in self.nodes.iter().enumerate() {
            if !n.is_leaf() {
                depth[n.left as usize] = depth[i] + 1;
                depth[n.right as usize] = depth[i] + 1;
            }
            max = max.max(depth[i]);
        }
        max
    }

    /// Index of the leaf reached by `x`.
    #[inline]
    pub fn leaf_index(&self, x: &[f64; 3]) -> usize {
        let mut i = 0usize;
        loop {
            let n = &self.nodes[i];
            if n.is_leaf() {
                return i;
            }
            i = if x[n.feature as usize] <= n.threshold {
                n.left
            } else {
                n.right
            } as usize;
        }
    }

    #[inline]
    pub fn predict(&self, phi0: f64, theta0: f64, vol_frac: f64) -> [f64; 2] {
        self.predict_row(&[phi0, theta0, vol_frac])
    }

    #[inline]
    pub fn predict_row(&self, x: &[f64; 3]) -> [f64; 2] {
        self.nodes[self.leaf_index(x)].value
    }

    pub fn predict_batch(&self, x: &[[f64; 3]]) -> Vec<[f64; 2]> {
        x.par_iter().map(|r| self.predict_row(r)).collect()
    }

    /// Serialized size in bytes.
    pub fn model_bytes(&self) -> u64 {
        io::encoded_len(self.nodes.len())
    }
}

fn validate_nodes(nodes: &[Node]) -> Result<(), TreeError> {
    if nodes.is_empty() {
        return Err(TreeError::Malformed("no nodes"));
    }
    let n = nodes.len() as u64;
    for (i, node) in nodes.iter().enumerate() {
        if node.is_leaf() {
            continue;
        }
        if node.feature > 2 {
            return Err(TreeError::Malformed("feature index out of range"));
        }
        let (l, r) = (node.left as u64, node.right as u64);
        if l <= i as u64 || r <= i as u64 || l >= n || r >= n || l == r {
            return Err(TreeError::Malformed("bad child index"));
        }
    }
    Ok(())
}

/// Per-component coefficients of determination and their average. A
/// component with zero target variance scores 1 when predicted exactly and
/// 0 otherwise.
pub fn r2_scores(truth: &[[f64; 2]], pred: &[[f64; 2]]) -> (f64, [f64; 2]) {
    let n = truth.len() as f64;
    let mut r2 = [0.0; 2];
    for k in 0..2 {
        let mean = truth.iter().map(|t| t[k]).sum::<f64>() / n;
        let ss_tot: f64 = truth.iter().map(|t| (t[k] - mean).powi(2)).sum();
        let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t[k] - p[k]).powi(2)).sum();
        r2[k] = if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else if ss_res == 0.0 {
            1.0
        } else {
            0.0
        };
    }
    (0.5 * (r2[0] + r2[1]), r2)
}

/// One-shot reconstruction: initial guess, predicted correction, then the
/// offset that restores the volume fraction exactly.
pub fn dtmof_reconstruct(model: &TreeModel, c_ref: &Vec3, vol: f64) -> Result<PlaneCut, MofError> {
    check_fraction(vol)?;
    let g = initial_guess(c_ref).angles;
    let d = model.predict(g.phi, g.theta, vol);
    let a = AnglePair::wrapped(g.phi + d[0], g.theta + d[1]);
    Ok(geom::plane_with_volume(&a.normal(), vol)?)
}

/// [`dtmof_reconstruct`] that reconstructs the minority phase when
/// `vol > 0.5` and returns the complementary cut.
pub fn dtmof_reconstruct_symmetric(model: &TreeModel, c_ref: &Vec3, vol: f64) -> Result<PlaneCut, MofError> {
    check_fraction(vol)?;
    if vol <= 0.5 {
        return dtmof_reconstruct(model, c_ref, vol);
    }
    let rest = CellMoments {
        volume_fraction: vol,
        centroid: *c_ref,
    }
    .complement();
    Ok(dtmof_reconstruct(model, &rest.centroid, rest.volume_fraction)?.complement())
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ModelMetrics {
    pub samples: usize,
    /// Average of the two per-component scores.
    pub r2: f64,
    pub r2_phi: f64,
    pub r2_theta: f64,
    /// Mean L₁ distance between reconstructed and exact centroids.
    pub centroid_l1: f64,
    pub leaf_count: usize,
    pub node_count: usize,
    pub depth: usize,
    pub model_bytes: u64,
    pub predict_seconds: f64,
    pub reconstruct_seconds: f64,
}

/// Score predicted corrections and DTMOF centroids against a dataset.
pub fn evaluate(model: &TreeModel, samples: &[TrainingSample]) -> Result<ModelMetrics, MofError> {
    let x: Vec<[f64; 3]> = samples.iter().map(TrainingSample::features).collect();
    let y: Vec<[f64; 2]> = samples.iter().map(TrainingSample::targets).collect();
    let t0 = Instant::now();
    let pred = model.predict_batch(&x);
    let predict_seconds = t0.elapsed().as_secs_f64();
    let (r2, [r2_phi, r2_theta]) = r2_scores(&y, &pred);

    let t1 = Instant::now();
    let errors: Vec<f64> = samples
        .par_iter()
        .zip(&pred)
        .map(|(s, d)| centroid_error(s, *d))
        .collect::<Result<_, _>>()?;
    let reconstruct_seconds = t1.elapsed().as_secs_f64();
    let centroid_l1 = errors.iter().sum::<f64>() / errors.len().max(1) as f64;

    Ok(ModelMetrics {
        samples: samples.len(),
        r2,
        r2_phi,
        r2_theta,
        centroid_l1,
        leaf_count: model.leaf_count(),
        node_count: model.node_count(),
        depth: model.depth(),
        model_bytes: model.model_bytes(),
        predict_seconds,
        reconstruct_seconds,
    })
}

/// L₁ centroid error of the cut rebuilt from a sample's features and a
/// predicted correction.
pub fn centroid_error(s: &TrainingSample, d: [f64; 2]) -> Result<f64, MofError> {
    let exact = geom::moments_from_plane(&geom::plane_with_volume(&s.true_angles().normal(), s.vol_frac)?);
    let a = AnglePair::wrapped(s.phi0 + d[0], s.theta0 + d[1]);
    let got = geom::moments_from_plane(&geom::plane_with_volume(&a.normal(), s.vol_frac)?);
    Ok((got.centroid - exact.centroid).abs().sum())
}
