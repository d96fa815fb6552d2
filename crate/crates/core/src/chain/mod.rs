//! Empirical and synthetic Markov chains.

mod synth;
mod trips;

pub use synth::{generate_block_chain, generate_ground_truth, simulate_trajectory, stationary_distribution, GroundTruthChain};
pub use trips::{bin_trip_records, BinnedTrips, BoundingBox, GridCell, TripRecord};

use serde::{Deserialize, Serialize};

use crate::dense::{DenseMatrix, ProbVector};
use crate::error::{Error, Result};

/// An observed state path `i₀ … i_n` over `d` states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    states: Vec<usize>,
    d: usize,
}

impl Trajectory {
    pub fn new(states: Vec<usize>, d: usize) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "trajectory needs at least 2 states, got {}",
                states.len()
            )));
        }
        if let Some(bad) = states.iter().find(|&&s| s >= d) {
            return Err(Error::InvalidInput(format!(
                "state index {bad} out of range for {d} states"
            )));
        }
        Ok(Self { states, d })
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn num_states(&self) -> usize {
        self.d
    }

    /// Number of transitions `n`.
    pub fn transitions(&self) -> usize {
        self.states.len() - 1
    }
}

/// Empirical transition matrix and stationary distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalChain {
    p_hat: DenseMatrix,
    xi_hat: ProbVector,
}

impl EmpiricalChain {
    pub const ROW_TOL: f64 = 1e-12;

    pub fn new(p_hat: DenseMatrix, xi_hat: ProbVector) -> Result<Self> {
        let d = p_hat.rows();
        if p_hat.cols() != d {
            return Err(Error::dims(
                "square transition matrix",
                format!("{}x{}", d, p_hat.cols()),
            ));
        }
        if xi_hat.dim() != d {
            return Err(Error::dims(
                format!("stationary vector of length {d}"),
                format!("{}", xi_hat.dim()),
            ));
        }
        if p_hat.min_entry() < 0.0 {
            return Err(Error::InvalidInput("transition matrix has negative entries".into()));
        }
        for (i, s) in p_hat.row_sums().iter().enumerate() {
            if (s - 1.0).abs() > Self::ROW_TOL {
                return Err(Error::InvalidInput(format!(
                    "row {i} of the transition matrix sums to {s}"
                )));
            }
        }
        Ok(Self { p_hat, xi_hat })
    }

    pub fn dim(&self) -> usize {
        self.p_hat.rows()
    }

    pub fn p_hat(&self) -> &DenseMatrix {
        &self.p_hat
    }

    pub fn xi_hat(&self) -> &ProbVector {
        &self.xi_hat
    }

    /// Diagonal of Ξ̂².
    pub fn xi_sq(&self) -> Vec<f64> {
        self.xi_hat.iter().map(|x| x * x).collect()
    }
}

/// `ξ̂_j = (1/n) Σ_{t=1}^{n} 1{i_t = j}`
pub fn estimate_stationary(traj: &Trajectory) -> ProbVector {
    let mut counts = vec![0.0; traj.num_states()];
    for &s in &traj.states()[1..] {
        counts[s] += 1.0;
    }
    ProbVector::from_weights(counts).expect("n ≥ 1 visits")
}

/// Row-normalized transition counts; unvisited states get a uniform row.
pub fn estimate_transition(traj: &Trajectory) -> EmpiricalChain {
    let d = traj.num_states();
    let mut counts = DenseMatrix::zeros(d, d);
    for w in traj.states().windows(2) {
        counts[(w[0], w[1])] += 1.0;
    }
    normalize_counts(&mut counts);
    EmpiricalChain::new(counts, estimate_stationary(traj)).expect("rows normalized")
}

/// Turns a count matrix into a row-stochastic matrix in place; all-zero rows
/// become uniform.
pub(crate) fn normalize_counts(counts: &mut DenseMatrix) {
    let d = counts.cols();
    for i in 0..counts.rows() {
        let row = counts.row_mut(i);
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|x| *x /= total);
            // exact row sums matter downstream; push the residual onto the largest entry
            let resid = 1.0 - row.iter().sum::<f64>();
            if resid != 0.0 {
                let k = (0..row.len())
                    .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                    .unwrap_or(0);
                row[k] += resid;
            }
        } else {
            row.iter_mut().for_each(|x| *x = 1.0 / d as f64);
        }
    }
}
