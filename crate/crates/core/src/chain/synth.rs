use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::dense::{sample_simplex, DenseMatrix, ProbVector, RngStream};
use crate::error::{Error, Result};

/// A chain with a planted aggregation structure `P* = U*·V*ᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthChain {
    u: DenseMatrix,
    v: DenseMatrix,
    p: DenseMatrix,
    xi: ProbVector,
}

const STOCHASTIC_TOL: f64 = 1e-10;

impl GroundTruthChain {
    /// Assembles `P* = U·Vᵀ` and its stationary distribution.
    pub fn from_factors(u: DenseMatrix, v: DenseMatrix) -> Result<Self> {
        if u.shape() != v.shape() || u.rows() < u.cols() {
            return Err(Error::dims(
                "U and V both d×r with r ≤ d",
                format!("U {:?}, V {:?}", u.shape(), v.shape()),
            ));
        }
        if u.min_entry() < 0.0 || v.min_entry() < 0.0 {
            return Err(Error::InvalidInput("factors must be nonnegative".into()));
        }
        if u.row_sums().iter().any(|s| (s - 1.0).abs() > STOCHASTIC_TOL) {
            return Err(Error::InvalidInput("U must be row-stochastic".into()));
        }
        if v.col_sums().iter().any(|s| (s - 1.0).abs() > STOCHASTIC_TOL) {
            return Err(Error::InvalidInput("V must be column-stochastic".into()));
        }
        let p = u.matmul_nt(&v)?;
        let xi = stationary_distribution(&p)?;
        Ok(Self { u, v, p, xi })
    }

    /// Wraps an arbitrary stochastic matrix with the trivial factorization
    /// `U = P`, `V = I`.
    pub fn from_transition(p: DenseMatrix) -> Result<Self> {
        let d = p.rows();
        Self::from_factors(p, DenseMatrix::identity(d))
    }

    pub fn dim(&self) -> usize {
        self.p.rows()
    }

    pub fn rank(&self) -> usize {
        self.u.cols()
    }

    pub fn u(&self) -> &DenseMatrix {
        &self.u
    }

    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    pub fn p(&self) -> &DenseMatrix {
        &self.p
    }

    pub fn xi(&self) -> &ProbVector {
        &self.xi
    }
}

/// Stationary distribution by power iteration on the lazy chain `(P + I)/2`,
/// which shares its fixed points with `P` and is aperiodic.
pub fn stationary_distribution(p: &DenseMatrix) -> Result<ProbVector> {
    let d = p.rows();
    let mut xi = vec![1.0 / d as f64; d];
    for _ in 0..100_000 {
        let pt = p.tr_matvec(&xi)?;
        let mut next: Vec<f64> = xi.iter().zip(&pt).map(|(a, b)| 0.5 * (a + b)).collect();
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let change = next
            .iter()
            .zip(&xi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        xi = next;
        if change < 1e-12 {
            // a few extra sweeps tighten the residual well past the stopping threshold
            for _ in 0..8 {
                let pt = p.tr_matvec(&xi)?;
                let total: f64 = pt.iter().sum();
                xi = pt.iter().map(|x| x.max(0.0) / total).collect();
            }
            return ProbVector::from_weights(xi);
        }
    }
    Err(Error::Numeric(
        "power iteration for the stationary distribution did not converge".into(),
    ))
}

/// Rows of U* uniform on the r-simplex, columns of V* uniform on the d-simplex.
pub fn generate_ground_truth(rng: &mut RngStream, d: usize, r: usize) -> Result<GroundTruthChain> {
    if r == 0 || r > d {
        return Err(Error::InvalidInput(format!("need 1 ≤ r ≤ d, got r={r}, d={d}")));
    }
    let mut u = DenseMatrix::zeros(d, r);
    for i in 0..d {
        u.row_mut(i).copy_from_slice(&sample_simplex(rng, r));
    }
    let cols: Vec<Vec<f64>> = (0..r).map(|_| sample_simplex(rng, d)).collect();
    let v = DenseMatrix::from_columns(&cols)?;
    GroundTruthChain::from_factors(u, v)
}

/// Lumpable chain with hard memberships: state `i` in block `b` has `U*_i = e_b`,
/// and each column of V* is uniform on the d-simplex. Returns the chain and
/// the block label of every state.
pub fn generate_block_chain(rng: &mut RngStream, sizes: &[usize]) -> Result<(GroundTruthChain, Vec<usize>)> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::InvalidInput("block sizes must be positive".into()));
    }
    let labels: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &n)| std::iter::repeat(b).take(n))
        .collect();
    let (d, r) = (labels.len(), sizes.len());
    let u = DenseMatrix::from_fn(d, r, |i, j| if labels[i] == j { 1.0 } else { 0.0 });
    let cols: Vec<Vec<f64>> = (0..r).map(|_| sample_simplex(rng, d)).collect();
    let v = DenseMatrix::from_columns(&cols)?;
    Ok((GroundTruthChain::from_factors(u, v)?, labels))
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn draw(cdf: &[f64], u: f64) -> usize {
    let total = *cdf.last().expect("non-empty");
    let target = u * total;
    cdf.partition_point(|&c| c <= target).min(cdf.len() - 1)
}

/// `i₀ ~ ξ*`, then `i_t ~ P*[i_{t−1}, ·]` for `t = 1..n`.
pub fn simulate_trajectory(
    rng: &mut RngStream,
    chain: &GroundTruthChain,
    n: usize,
) -> Result<Trajectory> {
    if n == 0 {
        return Err(Error::InvalidInput("trajectory needs n ≥ 1 transitions".into()));
    }
    let d = chain.dim();
    let cdfs: Vec<Vec<f64>> = (0..d).map(|i| cumulative(chain.p().row(i))).collect();
    let mut states = Vec::with_capacity(n + 1);
    let mut cur = draw(&cumulative(chain.xi()), rng.uniform());
    states.push(cur);
    for _ in 0..n {
        cur = draw(&cdfs[cur], rng.uniform());
        states.push(cur);
    }
    Trajectory::new(states, d)
}
