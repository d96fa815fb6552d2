//! k-means++ clustering, adjusted Rand index, and state partitions.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::EmpiricalChain;
use crate::dense::{thin_svd, DenseMatrix, RngStream};
use crate::error::{Error, Result};
use crate::objective::FactorPair;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// k × q
    pub centroids: DenseMatrix,
    pub wcss: f64,
    /// Replicate index that produced the kept solution.
    pub replicate: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &DenseMatrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = sq_dist(point, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// D² seeding: first centre uniform, then each next centre with probability
/// proportional to the squared distance to the nearest chosen centre.
pub(crate) fn seed_centroids(points: &DenseMatrix, k: usize, rng: &mut RngStream) -> DenseMatrix {
    let m = points.rows();
    let mut chosen = vec![rng.below(m)];
    let mut dist: Vec<f64> = (0..m).map(|i| sq_dist(points.row(i), points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.uniform() * total;
            let mut pick = None;
            for (i, &w) in dist.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total has a positive entry")
        } else {
            rng.below(m)
        };
        chosen.push(next);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    points.select_rows(&chosen)
}

/// Lloyd iterations from `centroids`; returns labels, final centroids and the
/// WCSS after every assignment step.
pub(crate) fn lloyd(
    points: &DenseMatrix,
    mut centroids: DenseMatrix,
    max_iters: usize,
) -> (Vec<usize>, DenseMatrix, Vec<f64>) {
    let (m, q) = points.shape();
    let k = centroids.rows();
    let mut labels = vec![usize::MAX; m];
    let mut history = Vec::new();
    for _ in 0..max_iters.max(1) {
        let mut dists = vec![0.0; m];
        let mut changed = false;
        for i in 0..m {
            let (c, d) = nearest(points.row(i), &centroids);
            changed |= labels[i] != c;
            labels[i] = c;
            dists[i] = d;
        }
        // An empty cluster takes the point farthest from its current centre.
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..m)
                    .filter(|&i| counts[labels[i]] > 1)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("m >= k leaves a shared cluster");
                counts[labels[far]] -= 1;
                labels[far] = c;
                counts[c] = 1;
                dists[far] = 0.0;
                centroids.row_mut(c).copy_from_slice(points.row(far));
                changed = true;
            }
        }
        history.push(dists.iter().sum());
        if !changed {
            break;
        }
        let mut sums = DenseMatrix::zeros(k, q);
        for i in 0..m {
            for (s, x) in sums.row_mut(labels[i]).iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            let n = counts[c] as f64;
            sums.row_mut(c).iter_mut().for_each(|s| *s /= n);
        }
        centroids = sums;
    }
    (labels, centroids, history)
}

fn wcss(points: &DenseMatrix, labels: &[usize], centroids: &DenseMatrix) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(points.row(i), centroids.row(c)))
        .sum()
}

/// k-means with k-means++ seeding; best of `replicates` by WCSS, ties kept at
/// the lowest replicate index.
pub fn kmeans_pp(
    points: &DenseMatrix,
    k: usize,
    replicates: usize,
    max_iters: usize,
    rng: &mut RngStream,
) -> Result<KMeansResult> {
    let m = points.rows();
    if k == 0 || k > m {
        return Err(Error::InvalidInput(format!("k = {k} outside 1..={m}")));
    }
    if replicates == 0 {
        return Err(Error::InvalidInput("at least one replicate is required".into()));
    }
    if !points.is_finite() {
        return Err(Error::InvalidInput("points contain non-finite values".into()));
    }
    let base = RngStream::new(rng.next_u64());
    let runs: Vec<KMeansResult> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let mut r = base.fork(rep as u64);
            let seeds = seed_centroids(points, k, &mut r);
            let (labels, centroids, _) = lloyd(points, seeds, max_iters);
            let wcss = wcss(points, &labels, &centroids);
            KMeansResult {
                labels,
                centroids,
                wcss,
                replicate: rep,
            }
        })
        .collect();
    Ok(runs
        .into_iter()
        .reduce(|best, run| if run.wcss < best.wcss { run } else { best })
        .expect("replicates >= 1"))
}

fn choose2(n: usize) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index between two labelings of the same items. Two labelings
/// that are both a single cluster (or both all singletons) score 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims(format!("{} labels", a.len()), b.len().to_string()));
    }
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![0usize; ka * kb];
    let mut rows = vec![0usize; ka];
    let mut cols = vec![0usize; kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
        rows[x] += 1;
        cols[y] += 1;
    }
    let index: f64 = table.iter().map(|&c| choose2(c)).sum();
    let sa: f64 = rows.iter().map(|&c| choose2(c)).sum();
    let sb: f64 = cols.iter().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    let expected = if total > 0.0 { sa * sb / total } else { 0.0 };
    let max = 0.5 * (sa + sb);
    if max == expected {
        return Ok(if a_equiv_b(a, b) { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

fn a_equiv_b(a: &[usize], b: &[usize]) -> bool {
    let mut ab = std::collections::HashMap::new();
    let mut ba = std::collections::HashMap::new();
    a.iter()
        .zip(b)
        .all(|(x, y)| *ab.entry(*x).or_insert(*y) == *y && *ba.entry(*y).or_insert(*x) == *x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMethod {
    /// Rows of the fitted `U`.
    Aggregation,
    /// Rows of `Ξ̂⁻¹Ǔ`, `Ǔ` the top-k left singular vectors of `Ξ̂P̂`.
    SvdBaseline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionResult {
    /// d × q
    pub embedding: DenseMatrix,
    pub labels: Vec<usize>,
    pub k: usize,
    pub method: PartitionMethod,
    pub wcss: f64,
}

/// Embeds the states with `method` and clusters the rows into `k` groups.
/// `factors` is required for the aggregation method.
pub fn partition_states(
    chain: &EmpiricalChain,
    factors: Option<&FactorPair>,
    k: usize,
    method: PartitionMethod,
    replicates: usize,
    rng: &mut RngStream,
) -> Result<PartitionResult> {
    let d = chain.dim();
    if k == 0 || k > d {
        return Err(Error::InvalidInput(format!("k = {k} outside 1..={d}")));
    }
    let embedding = match method {
        PartitionMethod::Aggregation => {
            let fp = factors.ok_or_else(|| {
                Error::InvalidInput("aggregation partition needs fitted factors".into())
            })?;
            if fp.dim() != d {
                return Err(Error::dims(format!("{d} states"), fp.dim().to_string()));
            }
            fp.u().clone()
        }
        PartitionMethod::SvdBaseline => {
            let xi = chain.xi_hat();
            if xi.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::InvalidInput(
                    "svd baseline needs every state to have positive frequency".into(),
                ));
            }
            let svd = thin_svd(&chain.p_hat().scale_rows(xi)?, k)?;
            let inv: Vec<f64> = xi.iter().map(|x| 1.0 / x).collect();
            svd.left.scale_rows(&inv)?
        }
    };
    let km = kmeans_pp(&embedding, k, replicates, KMEANS_MAX_ITERS, rng)?;
    Ok(PartitionResult {
        embedding,
        labels: km.labels,
        k,
        method,
        wcss: km.wcss,
    })
}

pub const KMEANS_MAX_ITERS: usize = 300;
