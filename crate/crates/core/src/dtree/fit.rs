//! Greedy CART growth with a summed two-target squared-error criterion.

use super::{Node, TreeError, TreeParams, LEAF};

/// Nodes above this size build their children on separate rayon tasks.
const PARALLEL_MIN: usize = 8192;

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Sum over children of `n_k · |mean_k − mean_parent|²`; maximizing it
    /// minimizes the summed child squared error.
    pub score: f64,
}

pub(crate) struct Builder<'a> {
    x: &'a [[f64; 3]],
    y: &'a [[f64; 2]],
    params: &'a TreeParams,
}

impl<'a> Builder<'a> {
    pub fn new(x: &'a [[f64; 3]], y: &'a [[f64; 2]], params: &'a TreeParams) -> Result<Self, TreeError> {
        if x.is_empty() {
            return Err(TreeError::EmptyDataset);
        }
        if x.len() != y.len() {
            return Err(TreeError::LengthMismatch(x.len(), y.len()));
        }
        if x.len() > u32::MAX as usize {
            return Err(TreeError::TooLarge(x.len()));
        }
        let bad = x.iter().any(|r| r.iter().any(|v| !v.is_finite()))
            || y.iter().any(|r| r.iter().any(|v| !v.is_finite()));
        if bad {
            return Err(TreeError::NonFinite);
        }
        params.validate()?;
        Ok(Self { x, y, params })
    }

    pub fn build(&self) -> Vec<Node> {
        let mut idx: Vec<u32> = (0..self.x.len() as u32).collect();
        self.grow(&mut idx, 0)
    }

    /// Compensated (Neumaier) mean of the node's targets.
    fn mean(&self, idx: &[u32]) -> [f64; 2] {
        let mut s = [0.0f64; 2];
        let mut c = [0.0f64; 2];
        for &i in idx {
            let t = self.y[i as usize];
            for k in 0..2 {
                let u = s[k] + t[k];
                c[k] += if s[k].abs() >= t[k].abs() {
                    (s[k] - u) + t[k]
                } else {
                    (t[k] - u) + s[k]
                };
                s[k] = u;
            }
        }
        let n = idx.len() as f64;
        [(s[0] + c[0]) / n, (s[1] + c[1]) / n]
    }

    fn grow(&self, idx: &mut [u32], depth: usize) -> Vec<Node> {
        let n = idx.len();
        let value = self.mean(idx);
        let leaf = || {
            vec![Node {
                feature: LEAF,
                threshold: 0.0,
                left: 0,
                right: 0,
                value,
                count: n as u64,
            }]
        };
        if depth >= self.params.max_depth || n < 2 * self.params.min_samples_leaf {
            return leaf();
        }
        let constant = idx.iter().all(|&i| self.y[i as usize] == self.y[idx[0] as usize]);
        if constant {
            return leaf();
        }
        let split = if self.params.exact_splits || n <= self.params.n_bins {
            best_split_exact(self.x, self.y, idx, value, self.params.min_samples_leaf)
        } else {
            best_split_histogram(self.x, self.y, idx, value, self.params)
        };
        let Some(split) = split else {
            return leaf();
        };

        let n_left = partition(idx, |i| self.x[i as usize][split.feature] <= split.threshold);
        let (li, ri) = idx.split_at_mut(n_left);
        let (left, right) = if n >= PARALLEL_MIN {
            rayon::join(|| self.grow(li, depth + 1), || self.grow(ri, depth + 1))
        } else {
            (self.grow(li, depth + 1), self.grow(ri, depth + 1))
        };

        let mut nodes = Vec::with_capacity(1 + left.len() + right.len());
        let left_at = 1u32;
        let right_at = 1 + left.len() as u32;
        nodes.push(Node {
            feature: split.feature as u32,
            threshold: split.threshold,
            left: left_at,
            right: right_at,
            value,
            count: n as u64,
        });
        append_shifted(&mut nodes, left, left_at);
        append_shifted(&mut nodes, right, right_at);
        nodes
    }
}

fn append_shifted(out: &mut Vec<Node>, sub: Vec<Node>, offset: u32) {
    out.extend(sub.into_iter().map(|mut node| {
        if node.feature != LEAF {
            node.left += offset;
            node.right += offset;
        }
        node
    }));
}

/// In-place partition; returns the number of entries satisfying `pred`,
/// which end up first.
fn partition(idx: &mut [u32], pred: impl Fn(u32) -> bool) -> usize {
    let mut k = 0;
    for j in 0..idx.len() {
        if pred(idx[j]) {
            idx.swap(k, j);
            k += 1;
        }
    }
    k
}

/// A threshold strictly separating `lo` (goes left) from `hi` (goes right).
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = 0.5 * (lo + hi);
    if m >= hi {
        lo
    } else {
        m
    }
}

#[inline]
fn score(l: [f64; 2], nl: f64, r: [f64; 2], nr: f64) -> f64 {
    (l[0] * l[0] + l[1] * l[1]) / nl + (r[0] * r[0] + r[1] * r[1]) / nr
}

/// Scan every boundary between distinct sorted values.
pub(crate) fn best_split_exact(
    x: &[[f64; 3]],
    y: &[[f64; 2]],
    idx: &[u32],
    mean: [f64; 2],
    min_leaf: usize,
) -> Option<Split> {
    let n = idx.len();
    let mut best: Option<Split> = None;
    let mut order = idx.to_vec();
    for f in 0..3 {
        order.sort_unstable_by(|&a, &b| x[a as usize][f].total_cmp(&x[b as usize][f]).then(a.cmp(&b)));
        let mut total = [0.0; 2];
        for &i in &order {
            total[0] += y[i as usize][0] - mean[0];
            total[1] += y[i as usize][1] - mean[1];
        }
        let mut l = [0.0; 2];
        for k in 0..n - 1 {
            let i = order[k] as usize;
            l[0] += y[i][0] - mean[0];
            l[1] += y[i][1] - mean[1];
            let (a, b) = (x[i][f], x[order[k + 1] as usize][f]);
            let nl = k + 1;
            if a == b || nl < min_leaf || n - nl < min_leaf {
                continue;
            }
            let r = [total[0] - l[0], total[1] - l[1]];
            let s = score(l, nl as f64, r, (n - nl) as f64);
            if best.is_none_or(|b| s > b.score) {
                best = Some(Split {
                    feature: f,
                    threshold: midpoint(a, b),
                    score: s,
                });
            }
        }
    }
    best.filter(|b| b.score > 0.0)
}

/// Per-node uniform bins over each feature's local range. Candidate
/// thresholds sit midway between the largest value of one occupied bin and
/// the smallest of the next, so the histogram counts match the partition.
fn best_split_histogram(
    x: &[[f64; 3]],
    y: &[[f64; 2]],
    idx: &[u32],
    mean: [f64; 2],
    params: &TreeParams,
) -> Option<Split> {
    let nb = params.n_bins;
    let n = idx.len();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in idx {
        let r = &x[i as usize];
        for f in 0..3 {
            lo[f] = lo[f].min(r[f]);
            hi[f] = hi[f].max(r[f]);
        }
    }

    let mut best: Option<Split> = None;
    let mut count = vec![0usize; nb];
    let mut sum = vec![[0.0f64; 2]; nb];
    let mut bmin = vec![0.0f64; nb];
    let mut bmax = vec![0.0f64; nb];
    for f in 0..3 {
        if !(hi[f] > lo[f]) {
            continue;
        }
        count.fill(0);
        sum.fill([0.0; 2]);
        bmin.fill(f64::INFINITY);
        bmax.fill(f64::NEG_INFINITY);
        let scale = nb as f64 / (hi[f] - lo[f]);
        for &i in idx {
            let v = x[i as usize][f];
            let b = (((v - lo[f]) * scale) as usize).min(nb - 1);
            let t = y[i as usize];
            count[b] += 1;
            sum[b][0] += t[0] - mean[0];
            sum[b][1] += t[1] - mean[1];
            bmin[b] = bmin[b].min(v);
            bmax[b] = bmax[b].max(v);
        }
        let mut total = [0.0; 2];
        for s in &sum {
            total[0] += s[0];
            total[1] += s[1];
        }
        let mut l = [0.0; 2];
        let mut nl = 0usize;
        let mut prev: Option<usize> = None;
        for b in 0..nb {
            if count[b] == 0 {
                continue;
            }
            if let Some(p) = prev {
                if nl >= params.min_samples_leaf && n - nl >= params.min_samples_leaf {
                    let r = [total[0] - l[0], total[1] - l[1]];
                    let s = score(l, nl as f64, r, (n - nl) as f64);
                    if best.is_none_or(|bb| s > bb.score) {
                        best = Some(Split {
                            feature: f,
                            threshold: midpoint(bmax[p], bmin[b]),
                            score: s,
                        });
                    }
                }
            }
            nl += count[b];
            l[0] += sum[b][0];
            l[1] += sum[b][1];
            prev = Some(b);
        }
    }
    best.filter(|b| b.score > 0.0)
}
