//! Removal of linearly dependent rank-one terms `Û_jV̂_jᵀ`.

use serde::{Deserialize, Serialize};

use crate::dense::{symmetric_eigen, weighted_frobenius, DenseMatrix};
use crate::error::Result;
use crate::objective::{Evaluation, FactorPair, LossContext};

/// One eliminated direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Elimination {
    /// Unit null direction `α` with the sign maximizing `max_j α_j`.
    pub alpha: Vec<f64>,
    /// `θ = 1/max_j α_j`
    pub theta: f64,
    /// Column of the input dropped by this step.
    pub dropped: usize,
    /// `‖Ξ̂Δ‖_F` for `Δ = θ Σ_j α_j Û_jV̂_jᵀ`
    pub delta_norm: f64,
    /// `Σ_j α_j ‖Û_j‖‖V̂_j‖`
    pub weighted_alpha_sum: f64,
    pub f_before: f64,
    pub f_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressOutcome {
    pub factors: FactorPair,
    pub eliminations: Vec<Elimination>,
    /// A candidate passed the `‖Ξ̂Δ‖_F` test but broke the objective bound.
    pub rejected: bool,
}

impl CompressOutcome {
    pub fn removed(&self) -> usize {
        self.eliminations.len()
    }
}

/// `G = (ÛᵀΞ̂²Û) ∘ (V̂ᵀV̂)`, the Gram matrix of the vectorized `Ξ̂Û_jV̂_jᵀ`.
pub fn weighted_gram(ctx: &LossContext, fp: &FactorPair) -> DenseMatrix {
    let wu = fp.u().scale_rows(ctx.xi_sq()).expect("d rows");
    let a = fp.u().matmul_tn(&wu).expect("same shape");
    let b = fp.v().matmul_tn(fp.v()).expect("same shape");
    a.zip_map(&b, |x, y| x * y).expect("same shape")
}

/// Eliminates one near-null direction at a time: rescales `Û` by `1 − θα`,
/// drops the column where `θα_j = 1` and renormalizes rows. Stops when the
/// smallest direction has `‖Ξ̂Δ‖_F > ε` or would move `F_λ` by more than
/// `ε(1 + ‖Ξ̂P̂‖_F)`.
pub fn remove_redundant(ctx: &LossContext, fp: &FactorPair, eps: f64) -> Result<CompressOutcome> {
    let bound = eps * (1.0 + ctx.data_norm());
    let mut current = fp.clone();
    let mut eliminations = Vec::new();
    let mut rejected = false;
    while current.rank() > 1 {
        let gram = weighted_gram(ctx, &current);
        let (values, vectors) = symmetric_eigen(&gram)?;
        if values[0].max(0.0).sqrt() > eps {
            break;
        }
        let mut alpha = vectors.col(0);
        let max_pos = alpha.iter().fold(f64::NEG_INFINITY, |m, a| m.max(*a));
        let max_neg = alpha.iter().fold(f64::NEG_INFINITY, |m, a| m.max(-a));
        if max_neg > max_pos {
            alpha.iter_mut().for_each(|a| *a = -*a);
        }
        let (dropped, top) = alpha
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bj, bv), (j, &a)| if a > bv { (j, a) } else { (bj, bv) });
        if !(top > 0.0) {
            break;
        }
        let theta = 1.0 / top;
        let coef: Vec<f64> = alpha.iter().map(|a| theta * a).collect();
        let delta = current
            .u()
            .scale_cols(&coef)?
            .matmul_nt(current.v())?;
        let delta_norm = weighted_frobenius(&delta, ctx.xi())?;
        if delta_norm > eps {
            break;
        }

        let keep: Vec<usize> = (0..current.rank()).filter(|&j| j != dropped).collect();
        let mut scale: Vec<f64> = coef.iter().map(|c| (1.0 - c).max(0.0)).collect();
        scale[dropped] = 0.0;
        let mut u = current.u().scale_cols(&scale)?.select_columns(&keep);
        let v = current.v().select_columns(&keep);
        let mut degenerate = false;
        for i in 0..u.rows() {
            let row = u.row_mut(i);
            let sum: f64 = row.iter().sum();
            if !(sum > 0.0) {
                degenerate = true;
                break;
            }
            row.iter_mut().for_each(|a| *a /= sum);
        }
        if degenerate {
            rejected = true;
            break;
        }
        let next = FactorPair::from_parts(u, v);
        let before = Evaluation::new(ctx, &current);
        let f_before = before.value();
        let f_after = Evaluation::new(ctx, &next).value();
        if (f_after - f_before).abs() > bound {
            rejected = true;
            break;
        }
        let weighted_alpha_sum = alpha
            .iter()
            .zip(before.u_norms.iter().zip(&before.v_norms))
            .map(|(a, (nu, nv))| a * nu * nv)
            .sum();
        eliminations.push(Elimination {
            alpha,
            theta,
            dropped,
            delta_norm,
            weighted_alpha_sum,
            f_before,
            f_after,
        });
        current = next;
    }
    Ok(CompressOutcome {
        factors: current,
        eliminations,
        rejected,
    })
}
