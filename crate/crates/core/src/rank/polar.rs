//! Atom maximization `max ūᵀWv̄` over unit nonnegative vectors.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::{sample_unit_nonneg, DenseMatrix, RngStream};
use crate::error::{Error, Result};

/// Alternations per start before giving up on further improvement.
pub const MAX_ALTERNATIONS: usize = 2000;
const IMPROVEMENT_TOL: f64 = 1e-14;

/// Best atom found: `σ = ūᵀWv̄` with `ū, v̄ ≥ 0`, `‖ū‖ = ‖v̄‖ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarResult {
    pub sigma: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub starts: usize,
}

impl PolarResult {
    /// `Ω°(W) = max(0, σ)`: the zero atom bounds the support function from below.
    pub fn support_value(&self) -> f64 {
        self.sigma.max(0.0)
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn basis(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, a) in x.iter().enumerate() {
        if *a > x[best] {
            best = i;
        }
    }
    best
}

/// Exact maximizer of `xᵀy` over unit nonnegative `x`: `[y]₊/‖[y]₊‖`, or the
/// basis vector at the largest entry when `y ≤ 0`.
pub(crate) fn best_response(y: &[f64]) -> (Vec<f64>, f64) {
    let mut pos: Vec<f64> = y.iter().map(|a| a.max(0.0)).collect();
    let n = norm(&pos);
    if n > 0.0 {
        pos.iter_mut().for_each(|a| *a /= n);
        (pos, n)
    } else {
        let i = argmax(y);
        (basis(y.len(), i), y[i])
    }
}

struct Ascent {
    value: f64,
    u: Vec<f64>,
    v: Vec<f64>,
}

/// Alternates `u ← best_response(Wv)`, `v ← best_response(Wᵀu)`; the value is
/// non-decreasing across half-steps.
fn ascend(w: &DenseMatrix, v0: Vec<f64>) -> Ascent {
    let mut v = v0;
    let (mut u, mut value) = best_response(&w.matvec(&v).expect("square"));
    for _ in 0..MAX_ALTERNATIONS {
        let (v_new, val_v) = best_response(&w.tr_matvec(&u).expect("square"));
        let (u_new, val_u) = best_response(&w.matvec(&v_new).expect("square"));
        let gain = val_u - value;
        v = v_new;
        u = u_new;
        let prev = value;
        value = val_u.max(val_v);
        if gain <= IMPROVEMENT_TOL * prev.abs().max(1e-300) {
            break;
        }
    }
    // value of the returned pair, recomputed so σ = uᵀWv holds exactly
    let wv = w.matvec(&v).expect("square");
    let value = u.iter().zip(&wv).map(|(a, b)| a * b).sum();
    Ascent { value, u, v }
}

/// Best atom over deterministic starts (uniform vector, dominant column and
/// dominant row of `[W]₊`) and `restarts` random starts. The value is a lower
/// bound on the true maximum; ties keep the lowest start index.
pub fn omega_polar(w: &DenseMatrix, rng: &mut RngStream, restarts: usize) -> Result<PolarResult> {
    let (rows, cols) = w.shape();
    if rows != cols {
        return Err(Error::dims("square matrix", format!("{rows}x{cols}")));
    }
    if !w.is_finite() {
        return Err(Error::Numeric("non-finite matrix in atom search".into()));
    }
    let d = rows;
    let pos = w.map(|a| a.max(0.0));
    if pos.max_abs() == 0.0 {
        // W ≤ 0: uᵀWv ≤ max w_ij since Σ u_i v_j ≥ 1 on the unit nonnegative spheres
        let (mut bi, mut bj) = (0, 0);
        for i in 0..d {
            for j in 0..d {
                if w[(i, j)] > w[(bi, bj)] {
                    bi = i;
                    bj = j;
                }
            }
        }
        return Ok(PolarResult {
            sigma: w[(bi, bj)],
            u: basis(d, bi),
            v: basis(d, bj),
            starts: 1,
        });
    }

    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(restarts + 3);
    starts.push(vec![1.0 / (d as f64).sqrt(); d]);
    let col_norms = pos.col_norms();
    starts.push(basis(d, argmax(&col_norms)));
    let row_norms = pos.transpose().col_norms();
    let top_row = pos.row(argmax(&row_norms)).to_vec();
    starts.push(best_response(&top_row).0);
    let base = RngStream::new(rng.next_u64());
    for k in 0..restarts {
        let mut r = base.fork(k as u64);
        starts.push(sample_unit_nonneg(&mut r, d));
    }
    let n = starts.len();
    let results: Vec<Ascent> = starts.into_par_iter().map(|v0| ascend(w, v0)).collect();
    let mut best = 0;
    for (k, r) in results.iter().enumerate() {
        if r.value > results[best].value {
            best = k;
        }
    }
    let Ascent { value, u, v } = results.into_iter().nth(best).expect("at least one start");
    Ok(PolarResult {
        sigma: value,
        u,
        v,
        starts: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::thin_svd;
    use proptest::prelude::*;

    /// Exact maximum for small W: at an optimum with supports (I, J) the pair is
    /// a positive singular pair of W_IJ, so enumerating supports covers it.
    fn support_oracle(w: &DenseMatrix) -> f64 {
        let n = w.rows();
        let mut best = f64::NEG_INFINITY;
        for i in 0..n {
            for j in 0..n {
                best = best.max(w[(i, j)]);
            }
        }
        for mi in 1u32..(1 << n) {
            let rows: Vec<usize> = (0..n).filter(|k| mi >> k & 1 == 1).collect();
            for mj in 1u32..(1 << n) {
                let cols: Vec<usize> = (0..n).filter(|k| mj >> k & 1 == 1).collect();
                let sub = DenseMatrix::from_fn(rows.len(), cols.len(), |a, b| w[(rows[a], cols[b])]);
                let k = rows.len().min(cols.len());
                let svd = thin_svd(&sub, k).unwrap();
                for t in 0..k {
                    let a = svd.left.col(t);
                    let b = svd.right.col(t);
                    for sign in [1.0, -1.0] {
                        if a.iter().all(|x| sign * x >= -1e-12) && b.iter().all(|x| sign * x >= -1e-12) {
                            best = best.max(svd.values[t]);
                        }
                    }
                }
            }
        }
        best
    }

    #[test]
    fn rank_one_nonnegative() {
        let a = [1.0, 2.0, 0.0, 3.0];
        let b = [0.5, 0.0, 4.0, 1.0];
        let w = DenseMatrix::from_fn(4, 4, |i, j| a[i] * b[j]);
        let r = omega_polar(&w, &mut RngStream::new(1), 20).unwrap();
        let expect = norm(&a) * norm(&b);
        assert!((r.sigma - expect).abs() < 1e-12);
        for (x, y) in r.u.iter().zip(a) {
            assert!((x - y / norm(&a)).abs() < 1e-10);
        }
        for (x, y) in r.v.iter().zip(b) {
            assert!((x - y / norm(&b)).abs() < 1e-10);
        }
    }

    #[test]
    fn negative_scalar() {
        let w = DenseMatrix::new(1, 1, vec![-1.0]).unwrap();
        let r = omega_polar(&w, &mut RngStream::new(1), 20).unwrap();
        assert_eq!(r.sigma, -1.0);
        assert_eq!(r.support_value(), 0.0);
    }

    #[test]
    fn nonpositive_matrix_takes_largest_entry() {
        let w = DenseMatrix::from_rows(&[vec![-3.0, -0.5], vec![-2.0, -4.0]]).unwrap();
        let r = omega_polar(&w, &mut RngStream::new(1), 5).unwrap();
        assert_eq!(r.sigma, -0.5);
        assert_eq!((r.u.clone(), r.v.clone()), (vec![1.0, 0.0], vec![0.0, 1.0]));
        assert_eq!(support_oracle(&w), -0.5);
    }

    #[test]
    fn matches_support_enumeration_oracle() {
        let mut rng = RngStream::new(11);
        for trial in 0..25 {
            let w = DenseMatrix::from_fn(6, 6, |_, _| rng.normal());
            let r = omega_polar(&w, &mut RngStream::new(trial), 20).unwrap();
            let oracle = support_oracle(&w);
            assert!((r.sigma - oracle).abs() < 1e-3, "trial {trial}: {} vs {oracle}", r.sigma);
            assert!(r.sigma <= oracle + 1e-10);
        }
    }

    #[test]
    fn witness_reproduces_value() {
        let mut rng = RngStream::new(5);
        let w = DenseMatrix::from_fn(10, 10, |_, _| rng.normal());
        let r = omega_polar(&w, &mut rng, 20).unwrap();
        assert!((norm(&r.u) - 1.0).abs() < 1e-12 && (norm(&r.v) - 1.0).abs() < 1e-12);
        assert!(r.u.iter().chain(&r.v).all(|a| *a >= 0.0));
        let wv = w.matvec(&r.v).unwrap();
        let val: f64 = r.u.iter().zip(&wv).map(|(a, b)| a * b).sum();
        assert!((val - r.sigma).abs() < 1e-10);
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = RngStream::new(5);
        let w = DenseMatrix::from_fn(8, 8, |_, _| rng.normal());
        let a = omega_polar(&w, &mut RngStream::new(9), 20).unwrap();
        let b = omega_polar(&w, &mut RngStream::new(9), 20).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn alternation_is_monotone(seed in 0u64..100_000, d in 1usize..8) {
            let mut rng = RngStream::new(seed);
            let w = DenseMatrix::from_fn(d, d, |_, _| rng.normal());
            let mut v = sample_unit_nonneg(&mut rng, d);
            let (mut u, mut value) = best_response(&w.matvec(&v).unwrap());
            for _ in 0..20 {
                let (v2, val_v) = best_response(&w.tr_matvec(&u).unwrap());
                prop_assert!(val_v >= value - 1e-12);
                let (u2, val_u) = best_response(&w.matvec(&v2).unwrap());
                prop_assert!(val_u >= val_v - 1e-12);
                u = u2;
                v = v2;
                value = val_u;
            }
            let _ = v;
        }
    }
}
