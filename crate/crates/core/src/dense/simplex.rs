//! Euclidean projections onto the unit simplex and onto stochastic matrices.

use serde::{Deserialize, Serialize};

use super::DenseMatrix;
use crate::error::{Error, Result};

/// Entrywise nonnegative vector summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub const SUM_TOL: f64 = 1e-12;

    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidInput("empty probability vector".into()));
        }
        if entries.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidInput(
                "probability vector entries must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::InvalidInput(format!(
                "probability vector sums to {sum}, not 1"
            )));
        }
        Ok(Self(entries))
    }

    /// Normalizes a nonnegative vector with positive mass.
    pub fn from_weights(mut w: Vec<f64>) -> Result<Self> {
        let total: f64 = w.iter().sum();
        if !(total > 0.0) || w.iter().any(|x| *x < 0.0 || !x.is_finite()) {
            return Err(Error::InvalidInput(
                "weights must be nonnegative with positive total".into(),
            ));
        }
        w.iter_mut().for_each(|x| *x /= total);
        Self::new(w)
    }

    pub fn uniform(dim: usize) -> Self {
        Self(vec![1.0 / dim as f64; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for ProbVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// In-place projection of `y` onto `{x ≥ 0, Σx = 1}` using the
/// sort-and-threshold formula. `scratch` is reused for the sorted copy.
pub(crate) fn project_simplex_in_place(y: &mut [f64], scratch: &mut Vec<f64>) -> Result<()> {
    let p = y.len();
    if p == 0 {
        return Err(Error::InvalidInput("cannot project an empty vector".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite entry in projection input".into()));
    }
    // Already feasible up to roundoff: leave untouched so the map is exactly idempotent.
    let sum: f64 = y.iter().sum();
    if y.iter().all(|&v| v >= 0.0) && (sum - 1.0).abs() <= 4.0 * f64::EPSILON * p as f64 {
        return Ok(());
    }
    scratch.clear();
    scratch.extend_from_slice(y);
    // Stable descending sort; ties keep original order.
    scratch.sort_by(|a, b| b.total_cmp(a));

    // l = max{ j : Σ_{k<j} (y_(k) - y_(j)) < 1 }
    let mut prefix = 0.0;
    let mut l = 1;
    let mut prefix_at_l = scratch[0];
    for (j0, &yj) in scratch.iter().enumerate() {
        // prefix holds Σ_{k<j} y_(k)
        if prefix - j0 as f64 * yj < 1.0 {
            l = j0 + 1;
            prefix_at_l = prefix + yj;
        }
        prefix += yj;
    }
    let eta = (1.0 - prefix_at_l) / l as f64;
    y.iter_mut().for_each(|v| *v = (*v + eta).max(0.0));
    Ok(())
}

/// Projection of `y` onto the unit simplex.
pub fn project_simplex(y: &[f64]) -> Result<ProbVector> {
    let mut out = y.to_vec();
    project_simplex_in_place(&mut out, &mut Vec::with_capacity(y.len()))?;
    Ok(ProbVector(out))
}

/// Projects every row onto the simplex (nearest row-stochastic matrix).
pub fn project_row_stochastic(a: &DenseMatrix) -> Result<DenseMatrix> {
    let mut out = a.clone();
    let mut scratch = Vec::with_capacity(a.cols());
    for i in 0..out.rows() {
        project_simplex_in_place(out.row_mut(i), &mut scratch)?;
    }
    Ok(out)
}

/// Projects every column onto the simplex (nearest column-stochastic matrix).
pub fn project_col_stochastic(a: &DenseMatrix) -> Result<DenseMatrix> {
    let mut out = a.clone();
    let mut scratch = Vec::with_capacity(a.rows());
    let mut col = vec![0.0; a.rows()];
    for j in 0..a.cols() {
        for (i, c) in col.iter_mut().enumerate() {
            *c = a[(i, j)];
        }
        project_simplex_in_place(&mut col, &mut scratch)?;
        for (i, c) in col.iter().enumerate() {
            out[(i, j)] = *c;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Projected gradient on ‖x − y‖²/2 with a bisection-based projection,
    /// independent of the sort formula.
    fn qp_oracle(y: &[f64]) -> Vec<f64> {
        // The projection is [y + t]_+ with t solving Σ[y + t]_+ = 1; bisection on t.
        let lo0 = -y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let hi0 = 1.0 - y.iter().cloned().fold(f64::INFINITY, f64::min);
        let (mut lo, mut hi) = (lo0, hi0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let s: f64 = y.iter().map(|v| (v + mid).max(0.0)).sum();
            if s > 1.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        y.iter().map(|v| (v + t).max(0.0)).collect()
    }

    fn grid_oracle_2(y: &[f64]) -> Vec<f64> {
        // fine grid over the 1-simplex
        let n = 200_000;
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=n {
            let a = k as f64 / n as f64;
            let d = (a - y[0]).powi(2) + (1.0 - a - y[1]).powi(2);
            if d < best.0 {
                best = (d, a);
            }
        }
        vec![best.1, 1.0 - best.1]
    }

    #[test]
    fn examples() {
        assert_eq!(project_simplex(&[0.3, 0.7]).unwrap().as_slice(), &[0.3, 0.7]);
        let g = grid_oracle_2(&[2.0, 0.0]);
        let p = project_simplex(&[2.0, 0.0]).unwrap();
        assert!((p[0] - g[0]).abs() < 1e-5 && (p[1] - g[1]).abs() < 1e-5);
        assert_eq!(p.as_slice(), &[1.0, 0.0]);
        let p3 = project_simplex(&[0.5, 0.5, -1.0]).unwrap();
        assert_eq!(p3.as_slice(), &[0.5, 0.5, 0.0]);
        assert!(project_simplex(&[f64::NAN, 1.0]).is_err());
        assert!(project_simplex(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn matrix_examples() {
        let eye = DenseMatrix::identity(2);
        assert_eq!(project_row_stochastic(&eye).unwrap(), eye);
        assert_eq!(project_col_stochastic(&eye).unwrap(), eye);
        let two = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        assert_eq!(project_row_stochastic(&two).unwrap(), eye);
        assert_eq!(project_col_stochastic(&two).unwrap(), eye);
        let half = DenseMatrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        assert_eq!(project_row_stochastic(&half).unwrap(), half);
        let col = DenseMatrix::from_rows(&[vec![0.25], vec![0.75]]).unwrap();
        assert_eq!(project_col_stochastic(&col).unwrap(), col);
    }

    #[test]
    fn tie_breaking_is_irrelevant_to_result() {
        let p = project_simplex(&[0.4, 0.4, 0.4]).unwrap();
        for v in p.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn idempotent(y in prop::collection::vec(-5.0f64..5.0, 1..12)) {
            let p = project_simplex(&y).unwrap();
            let q = project_simplex(&p).unwrap();
            prop_assert_eq!(p, q);
        }

        #[test]
        fn non_expansive(
            pair in (1usize..10).prop_flat_map(|n| (
                prop::collection::vec(-3.0f64..3.0, n),
                prop::collection::vec(-3.0f64..3.0, n),
            ))
        ) {
            let (a, b) = pair;
            let pa = project_simplex(&a).unwrap();
            let pb = project_simplex(&b).unwrap();
            let dp: f64 = pa.iter().zip(pb.iter()).map(|(x, y)| (x - y).powi(2)).sum();
            let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
            prop_assert!(dp.sqrt() <= d.sqrt() + 1e-12);
        }

        #[test]
        fn matches_bisection_oracle(y in prop::collection::vec(-4.0f64..4.0, 1..=8)) {
            let p = project_simplex(&y).unwrap();
            let o = qp_oracle(&y);
            for (a, b) in p.iter().zip(&o) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|v| *v >= 0.0));
        }
    }
}
