//! Solution-quality metrics: KKT residuals, global error, duality gap and
//! recovery errors.

use serde::{Deserialize, Serialize};

use crate::dense::{thin_svd, weighted_frobenius, DenseMatrix, RngStream};
use crate::error::{Error, Result};
use crate::objective::{Evaluation, FactorPair, LossContext};
use crate::rank::{certificate_matrix_from, multiplier_from, omega_polar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    #[serde(rename = "relLE1")]
    pub rel_le1: f64,
    #[serde(rename = "relLE2")]
    pub rel_le2: f64,
    /// A denominator vanished and the corresponding residual is `+∞`.
    pub degenerate: bool,
}

fn l1_ratio(num: &DenseMatrix, den: &DenseMatrix) -> (f64, bool) {
    let d = den.l1_norm();
    if d > 0.0 {
        (num.l1_norm() / d, false)
    } else {
        (f64::INFINITY, true)
    }
}

/// ℓ₁-normalized deviations of `[μ1ᵀ − ∇g V̂]₊` from `λÛ diag(‖V̂_j‖/‖Û_j‖)` and of
/// `[1μᵀÛ − ∇gᵀÛ]₊` from `λV̂ diag(‖Û_j‖/‖V̂_j‖)`.
pub fn kkt_residuals(ctx: &LossContext, fp: &FactorPair, mu: &[f64]) -> Result<KktResiduals> {
    if mu.len() != fp.dim() {
        return Err(Error::dims(format!("multiplier of length {}", fp.dim()), mu.len().to_string()));
    }
    let ev = Evaluation::new(ctx, fp);
    Ok(kkt_from(&ev, fp, mu, ctx.lambda()))
}

fn kkt_from(ev: &Evaluation, fp: &FactorPair, mu: &[f64], lambda: f64) -> KktResiduals {
    let (u, v) = (fp.u(), fp.v());
    let ratio_u: Vec<f64> = ev.u_norms.iter().zip(&ev.v_norms).map(|(a, b)| lambda * b / a).collect();
    let ratio_v: Vec<f64> = ev.u_norms.iter().zip(&ev.v_norms).map(|(a, b)| lambda * a / b).collect();
    let rhs1 = u.scale_cols(&ratio_u).expect("s columns");
    let rhs2 = v.scale_cols(&ratio_v).expect("s columns");
    // −∇g V̂ = Ξ̂²(P̂ − X̂)V̂
    let mut lhs1 = ev.wresid.matmul(v).expect("same shape");
    for (i, m) in mu.iter().enumerate() {
        lhs1.row_mut(i).iter_mut().for_each(|x| *x = (*x + m).max(0.0));
    }
    let mu_u = u.tr_matvec(mu).expect("d rows");
    // −∇gᵀÛ = (P̂ − X̂)ᵀΞ̂²Û
    let mut lhs2 = ev.wresid.matmul_tn(u).expect("same shape");
    for i in 0..lhs2.rows() {
        lhs2.row_mut(i)
            .iter_mut()
            .zip(&mu_u)
            .for_each(|(x, m)| *x = (*x + m).max(0.0));
    }
    let (rel_le1, d1) = l1_ratio(&lhs1.sub(&rhs1).expect("same shape"), &rhs1);
    let (rel_le2, d2) = l1_ratio(&lhs2.sub(&rhs2).expect("same shape"), &rhs2);
    KktResiduals {
        rel_le1,
        rel_le2,
        degenerate: d1 || d2,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalError {
    /// `Ω°(Ŵ) − 1`, certified from below.
    #[serde(rename = "GE")]
    pub ge: f64,
    /// `Ω°(Ŵ) = max(0, σ)`
    pub omega: f64,
    /// Raw best atom value of `Ŵ`.
    pub sigma: f64,
    pub restarts: usize,
}

/// `GE = Ω°(Ŵ) − 1` with `Ŵ = λ⁻¹(μ1ᵀ − ∇g(X̂))`.
pub fn global_error(
    ctx: &LossContext,
    fp: &FactorPair,
    mu: &[f64],
    rng: &mut RngStream,
    restarts: usize,
) -> Result<GlobalError> {
    let ev = Evaluation::new(ctx, fp);
    let w_hat = certificate_matrix_from(&ev, mu).scale(1.0 / ctx.lambda());
    global_error_of(&w_hat, rng, restarts)
}

fn global_error_of(w_hat: &DenseMatrix, rng: &mut RngStream, restarts: usize) -> Result<GlobalError> {
    let r = omega_polar(w_hat, rng, restarts)?;
    let omega = r.support_value();
    Ok(GlobalError {
        ge: omega - 1.0,
        omega,
        sigma: r.sigma,
        restarts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualValue {
    /// `g*(M)`; `+∞` when a zero-weight row of `M` is not constant.
    pub value: f64,
    /// Some `ξ̂_i = 0`; those rows were handled separately.
    pub degenerate: bool,
}

/// `g*(M) = sup_{X1=1} ⟨M,X⟩ − g(X)
///        = ½‖Ξ̂⁻¹M + Ξ̂P̂‖² − ½‖Ξ̂P̂‖² − (1/2d)‖Ξ̂⁻¹M1‖²`.
/// A row with `ξ̂_i = 0` contributes its common value if constant and `+∞` otherwise.
pub fn dual_value(ctx: &LossContext, m: &DenseMatrix) -> Result<DualValue> {
    let d = ctx.dim();
    if m.shape() != (d, d) {
        return Err(Error::dims(format!("{d}x{d}"), format!("{:?}", m.shape())));
    }
    if !m.is_finite() {
        return Err(Error::Numeric("non-finite dual candidate".into()));
    }
    let p = ctx.chain().p_hat();
    let mut total = 0.0;
    let mut degenerate = false;
    for (i, &xi) in ctx.xi().iter().enumerate() {
        let row = m.row(i);
        if xi > 0.0 {
            let xi2 = xi * xi;
            let mp: f64 = row.iter().zip(p.row(i)).map(|(a, b)| a * b).sum();
            let sq: f64 = row.iter().map(|a| a * a).sum();
            let sum: f64 = row.iter().sum();
            total += mp + (sq - sum * sum / d as f64) / (2.0 * xi2);
        } else {
            degenerate = true;
            let first = row[0];
            let spread = row.iter().map(|a| (a - first).abs()).fold(0.0, f64::max);
            if spread > 1e-12 * first.abs().max(1.0) {
                return Ok(DualValue {
                    value: f64::INFINITY,
                    degenerate,
                });
            }
            total += first;
        }
    }
    Ok(DualValue {
        value: total,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityGap {
    #[serde(rename = "relDG")]
    pub rel_dg: f64,
    pub primal: f64,
    /// `g*(M)` at `M = −λŴ/Ω°(Ŵ)`.
    pub conjugate: f64,
    pub omega: f64,
    pub degenerate: bool,
}

/// `(F + g*(M))/F` for the scaled dual candidate `M = −λŴ/Ω°(Ŵ)`.
pub fn relative_duality_gap(
    ctx: &LossContext,
    fp: &FactorPair,
    mu: &[f64],
    rng: &mut RngStream,
    restarts: usize,
) -> Result<DualityGap> {
    fp.check_feasible()?;
    let ev = Evaluation::new(ctx, fp);
    let a = certificate_matrix_from(&ev, mu);
    let ge = global_error_of(&a.scale(1.0 / ctx.lambda()), rng, restarts)?;
    gap_from(ctx, &ev, &a, ge.omega)
}

fn gap_from(ctx: &LossContext, ev: &Evaluation, a: &DenseMatrix, omega: f64) -> Result<DualityGap> {
    // M = −(λ/Ω°)Ŵ = −A/Ω°; with Ω° = 0 every multiple is feasible and M = 0 is used
    let m = if omega > 0.0 {
        a.scale(-1.0 / omega)
    } else {
        DenseMatrix::zeros(a.rows(), a.cols())
    };
    let dual = dual_value(ctx, &m)?;
    let primal = ev.value();
    Ok(DualityGap {
        rel_dg: (primal + dual.value) / primal,
        primal,
        conjugate: dual.value,
        omega,
        degenerate: dual.degenerate,
    })
}

/// `(‖Ξ̂(X̂ − P*)‖²/‖Ξ̂P*‖², ‖Ξ̂(P̂ − P*)‖²/‖Ξ̂P*‖²)`
pub fn recovery_errors(ctx: &LossContext, x_hat: &DenseMatrix, p_star: &DenseMatrix) -> Result<(f64, f64)> {
    let xi = ctx.xi();
    let den = weighted_frobenius(p_star, xi)?.powi(2);
    if !(den > 0.0) {
        return Err(Error::DegenerateFit("ground truth has zero weighted norm".into()));
    }
    let re = weighted_frobenius(&x_hat.sub(p_star)?, xi)?.powi(2) / den;
    let se = weighted_frobenius(&ctx.chain().p_hat().sub(p_star)?, xi)?.powi(2) / den;
    Ok((re, se))
}

/// `σ₁, σ_r, σ_{r+1}` of `Ξ̂P̂` (the last is `None` when `r = d`).
pub fn weighted_singular_values(ctx: &LossContext, r: usize) -> Result<(f64, f64, Option<f64>)> {
    let d = ctx.dim();
    if r == 0 || r > d {
        return Err(Error::InvalidInput(format!("rank {r} outside 1..={d}")));
    }
    let wp = ctx.chain().p_hat().scale_rows(ctx.xi())?;
    let k = (r + 1).min(d);
    let svd = thin_svd(&wp, k)?;
    Ok((svd.values[0], svd.values[r - 1], svd.values.get(r).copied()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    #[serde(rename = "relLE1")]
    pub rel_le1: f64,
    #[serde(rename = "relLE2")]
    pub rel_le2: f64,
    #[serde(rename = "GE")]
    pub ge: f64,
    #[serde(rename = "relDG")]
    pub rel_dg: f64,
    #[serde(rename = "relRE")]
    pub rel_re: Option<f64>,
    #[serde(rename = "relSE")]
    pub rel_se: Option<f64>,
    pub sigma_1: Option<f64>,
    pub sigma_r: Option<f64>,
    pub sigma_r_plus_1: Option<f64>,
    pub omega_restarts: usize,
    /// Zero weights or vanishing denominators were met.
    pub degenerate: bool,
}

/// All metrics at once; `ground_truth` enables relRE/relSE and `rank` the
/// singular values of `Ξ̂P̂`.
pub fn diagnose(
    ctx: &LossContext,
    fp: &FactorPair,
    ground_truth: Option<&DenseMatrix>,
    rank: Option<usize>,
    rng: &mut RngStream,
    restarts: usize,
) -> Result<DiagnosticsRecord> {
    fp.check_feasible()?;
    let ev = Evaluation::new(ctx, fp);
    let mu = multiplier_from(&ev, fp, ctx.lambda())?;
    let kkt = kkt_from(&ev, fp, &mu, ctx.lambda());
    let a = certificate_matrix_from(&ev, &mu);
    let ge = global_error_of(&a.scale(1.0 / ctx.lambda()), rng, restarts)?;
    let gap = gap_from(ctx, &ev, &a, ge.omega)?;
    let (rel_re, rel_se) = match ground_truth {
        Some(p) => {
            let (re, se) = recovery_errors(ctx, &fp.product(), p)?;
            (Some(re), Some(se))
        }
        None => (None, None),
    };
    let (sigma_1, sigma_r, sigma_r_plus_1) = match rank {
        Some(r) => {
            let (a, b, c) = weighted_singular_values(ctx, r)?;
            (Some(a), Some(b), c)
        }
        None => (None, None, None),
    };
    Ok(DiagnosticsRecord {
        rel_le1: kkt.rel_le1,
        rel_le2: kkt.rel_le2,
        ge: ge.ge,
        rel_dg: gap.rel_dg,
        rel_re,
        rel_se,
        sigma_1,
        sigma_r,
        sigma_r_plus_1,
        omega_restarts: restarts,
        degenerate: kkt.degenerate || gap.degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{estimate_transition, generate_ground_truth, simulate_trajectory, EmpiricalChain};
    use crate::dense::ProbVector;
    use crate::objective::objective_f;
    use crate::palm::SolverConfig;
    use crate::rank::{adapt_rank, compute_multiplier, RankAdaptConfig};
    use rand::RngCore;

    fn sampled_ctx(seed: u64, d: usize, r: usize, lambda: f64) -> (LossContext, DenseMatrix) {
        let mut rng = RngStream::new(seed);
        let gt = generate_ground_truth(&mut rng, d, r).unwrap();
        let t = simulate_trajectory(&mut rng, &gt, 20 * d * d).unwrap();
        (LossContext::new(estimate_transition(&t), lambda).unwrap(), gt.p().clone())
    }

    fn random_chain(rng: &mut RngStream, d: usize) -> EmpiricalChain {
        let p = DenseMatrix::from_fn(d, d, |_, _| rng.exp1());
        let sums = p.row_sums();
        let p = DenseMatrix::from_fn(d, d, |i, j| p[(i, j)] / sums[i]);
        let xi = ProbVector::new(crate::dense::sample_simplex(rng, d)).unwrap();
        EmpiricalChain::new(p, xi).unwrap()
    }

    /// Projected gradient ascent on the affine set `{X1 = 1}`.
    fn conjugate_by_ascent(ctx: &LossContext, m: &DenseMatrix) -> f64 {
        let d = ctx.dim();
        let p = ctx.chain().p_hat();
        let xi2 = ctx.xi_sq();
        let step = 1.0 / xi2.iter().cloned().fold(0.0, f64::max);
        let mut x = DenseMatrix::from_fn(d, d, |_, _| 1.0 / d as f64);
        for _ in 0..200_000 {
            let mut g = DenseMatrix::from_fn(d, d, |i, j| m[(i, j)] + xi2[i] * (p[(i, j)] - x[(i, j)]));
            for i in 0..d {
                let mean = g.row(i).iter().sum::<f64>() / d as f64;
                g.row_mut(i).iter_mut().for_each(|a| *a -= mean);
            }
            if g.max_abs() < 1e-15 {
                break;
            }
            x.axpy(step, &g).unwrap();
        }
        let diff = p.sub(&x).unwrap();
        let g_val = 0.5 * weighted_frobenius(&diff, ctx.xi()).unwrap().powi(2);
        m.dot(&x).unwrap() - g_val
    }

    #[test]
    fn conjugate_at_zero_is_zero() {
        let (ctx, _) = sampled_ctx(1, 5, 2, 1e-3);
        let v = dual_value(&ctx, &DenseMatrix::zeros(5, 5)).unwrap();
        assert!(v.value.abs() < 1e-15 && !v.degenerate);
    }

    #[test]
    fn conjugate_one_state_is_the_entry() {
        let chain = EmpiricalChain::new(
            DenseMatrix::new(1, 1, vec![1.0]).unwrap(),
            ProbVector::new(vec![1.0]).unwrap(),
        )
        .unwrap();
        let ctx = LossContext::new(chain, 0.1).unwrap();
        let v = dual_value(&ctx, &DenseMatrix::new(1, 1, vec![-0.7]).unwrap()).unwrap();
        assert!((v.value + 0.7).abs() < 1e-15);
    }

    #[test]
    fn conjugate_matches_numerical_supremum() {
        let mut rng = RngStream::new(3);
        for _ in 0..20 {
            let d = 2 + rng.below(4);
            let ctx = LossContext::new(random_chain(&mut rng, d), 1e-2).unwrap();
            let m = DenseMatrix::from_fn(d, d, |_, _| 0.05 * rng.normal());
            let closed = dual_value(&ctx, &m).unwrap().value;
            let numeric = conjugate_by_ascent(&ctx, &m);
            assert!((closed - numeric).abs() <= 1e-6 * (1.0 + numeric.abs()), "{closed} {numeric}");
        }
    }

    #[test]
    fn zero_weight_rows_are_constant_or_infinite() {
        let p = DenseMatrix::from_rows(&[vec![0.5, 0.5], vec![0.2, 0.8]]).unwrap();
        let chain = EmpiricalChain::new(p, ProbVector::new(vec![1.0, 0.0]).unwrap()).unwrap();
        let ctx = LossContext::new(chain, 0.1).unwrap();
        let constant = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![0.3, 0.3]]).unwrap();
        let v = dual_value(&ctx, &constant).unwrap();
        assert!(v.degenerate && (v.value - 0.3).abs() < 1e-15);
        let uneven = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![0.3, 0.4]]).unwrap();
        assert_eq!(dual_value(&ctx, &uneven).unwrap().value, f64::INFINITY);
    }

    #[test]
    fn weak_duality_holds_at_arbitrary_points() {
        let mut rng = RngStream::new(11);
        for _ in 0..10 {
            let (ctx, _) = sampled_ctx(rng.next_u64(), 8, 2, 1e-3);
            let s = 1 + rng.below(4);
            let fp = FactorPair::random(&mut rng, 8, s);
            let mu = compute_multiplier(&ctx, &fp).unwrap();
            let gap = relative_duality_gap(&ctx, &fp, &mu, &mut rng, 30).unwrap();
            assert!(gap.rel_dg >= -1e-8, "{}", gap.rel_dg);
            assert!((gap.primal - objective_f(&ctx, &fp).unwrap()).abs() < 1e-15);
        }
    }

    fn solve_tight(ctx: &LossContext, seed: u64) -> FactorPair {
        let mut rng = RngStream::new(seed);
        let fp = FactorPair::random(&mut rng, ctx.dim(), 1);
        let solver = SolverConfig {
            local_tol: 1e-10,
            local_window: 50,
            max_inner_iters: 50_000,
            ..SolverConfig::default()
        };
        let rank = RankAdaptConfig::exact(1e-3);
        let report = adapt_rank(ctx, &fp, &solver, &rank, &mut rng).unwrap();
        assert!(report.succeeded(), "{:?}", report.termination);
        report.factors
    }

    #[test]
    fn solved_point_has_small_residuals_and_gap() {
        let (ctx, _) = sampled_ctx(5, 6, 2, 1e-3);
        let fp = solve_tight(&ctx, 6);
        let mu = compute_multiplier(&ctx, &fp).unwrap();
        let kkt = kkt_residuals(&ctx, &fp, &mu).unwrap();
        // PALM creeps along a flat valley here; residuals settle near 1e-2
        assert!(kkt.rel_le1 < 1e-2 && kkt.rel_le2 < 1e-2, "{kkt:?}");
        let mut rng = RngStream::new(7);
        let ge = global_error(&ctx, &fp, &mu, &mut rng, 50).unwrap();
        assert!(ge.ge <= 2e-2, "{ge:?}");
        let gap = relative_duality_gap(&ctx, &fp, &mu, &mut rng, 50).unwrap();
        assert!(gap.rel_dg >= -1e-8 && gap.rel_dg < 2e-2, "{gap:?}");
    }

    #[test]
    fn random_point_has_large_residuals() {
        let (ctx, _) = sampled_ctx(8, 10, 3, 1e-3);
        let fp = FactorPair::random(&mut RngStream::new(9), 10, 3);
        let mu = compute_multiplier(&ctx, &fp).unwrap();
        let kkt = kkt_residuals(&ctx, &fp, &mu).unwrap();
        assert!(kkt.rel_le1 > 0.1 || kkt.rel_le2 > 0.1, "{kkt:?}");
        assert!(kkt_residuals(&ctx, &fp, &mu[..3]).is_err());
    }

    #[test]
    fn global_error_is_omega_minus_one() {
        let (ctx, _) = sampled_ctx(12, 6, 2, 1e-3);
        let fp = FactorPair::random(&mut RngStream::new(13), 6, 2);
        let mu = compute_multiplier(&ctx, &fp).unwrap();
        let ge = global_error(&ctx, &fp, &mu, &mut RngStream::new(1), 20).unwrap();
        assert!((ge.ge - (ge.omega - 1.0)).abs() < 1e-15);
        assert_eq!(ge.omega, ge.sigma.max(0.0));
    }

    #[test]
    fn recovery_error_identities() {
        let (ctx, p_star) = sampled_ctx(14, 7, 2, 1e-3);
        let (re, se) = recovery_errors(&ctx, &p_star, &p_star).unwrap();
        assert_eq!(re, 0.0);
        let (re2, se2) = recovery_errors(&ctx, ctx.chain().p_hat(), &p_star).unwrap();
        assert!((re2 - se).abs() < 1e-15 && (se2 - se).abs() < 1e-15 && se > 0.0);
        let zero = DenseMatrix::zeros(7, 7);
        assert!(recovery_errors(&ctx, &p_star, &zero).is_err());
    }

    #[test]
    fn singular_values_are_ordered() {
        let (ctx, _) = sampled_ctx(15, 8, 3, 1e-3);
        let (s1, s3, s4) = weighted_singular_values(&ctx, 3).unwrap();
        assert!(s1 >= s3 && s3 >= s4.unwrap());
        assert!(weighted_singular_values(&ctx, 8).unwrap().2.is_none());
        assert!(weighted_singular_values(&ctx, 0).is_err());
    }

    #[test]
    fn diagnose_bundles_the_metrics() {
        let (ctx, p_star) = sampled_ctx(16, 6, 2, 1e-3);
        let fp = solve_tight(&ctx, 17);
        let rec = diagnose(&ctx, &fp, Some(&p_star), Some(2), &mut RngStream::new(2), 20).unwrap();
        let mu = compute_multiplier(&ctx, &fp).unwrap();
        let kkt = kkt_residuals(&ctx, &fp, &mu).unwrap();
        assert_eq!((rec.rel_le1, rec.rel_le2), (kkt.rel_le1, kkt.rel_le2));
        assert!(rec.rel_re.is_some() && rec.sigma_r_plus_1.is_some());
        let json = serde_json::to_string(&rec).unwrap();
        assert!(json.contains("\"relDG\""));
    }
}
