//! Proximal alternating linearized minimization over row-stochastic U and
//! column-stochastic V, with column pruning and two step-size policies.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dense::{project_col_stochastic, project_row_stochastic, DenseMatrix};
use crate::error::{Error, Result};
use crate::objective::{lipschitz_u, lipschitz_v, Evaluation, FactorPair, LossContext};

/// Curvature margins used when a BB step cannot be formed or accepted.
pub const FALLBACK_GAMMA: f64 = 1.1;
/// Number of reference values in the nonmonotone line search.
pub const NONMONOTONE_WINDOW: usize = 5;
/// Backtracking budget before falling back to the Lipschitz step.
pub const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepPolicy {
    /// `c = 1/(γ₁L1)`, `d = 1/(γ₂L2)`; monotone.
    Lipschitz { gamma1: f64, gamma2: f64 },
    /// Alternating BB1/BB2 with nonmonotone backtracking by factor `delta`.
    Bb { delta: f64, eta: f64 },
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy::Bb {
            delta: 0.5,
            eta: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Column-prune threshold on `‖U_j‖₂`.
    pub eps0: f64,
    /// Linear-dependence threshold used by compression.
    pub eps: f64,
    pub step_policy: StepPolicy,
    pub local_window: usize,
    pub local_tol: f64,
    pub max_inner_iters: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps0: 1e-14,
            eps: 5e-5,
            step_policy: StepPolicy::default(),
            local_window: 30,
            local_tol: 1e-3,
            max_inner_iters: 5000,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(format!("solver config: {what}")));
        if !(self.eps0 > 0.0 && self.eps0.is_finite()) {
            return bad("eps0 must be positive");
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad("eps must be positive");
        }
        if self.local_window == 0 {
            return bad("local_window must be at least 1");
        }
        if !(self.local_tol >= 0.0 && self.local_tol.is_finite()) {
            return bad("local_tol must be nonnegative");
        }
        if self.max_inner_iters == 0 {
            return bad("max_inner_iters must be at least 1");
        }
        match self.step_policy {
            StepPolicy::Lipschitz { gamma1, gamma2 } => {
                if !(gamma1 > 1.0 && gamma2 > 1.0 && gamma1.is_finite() && gamma2.is_finite()) {
                    return bad("gamma1 and gamma2 must exceed 1");
                }
            }
            StepPolicy::Bb { delta, eta } => {
                if !(delta > 0.0 && delta < 1.0) {
                    return bad("delta must lie in (0, 1)");
                }
                if !(eta > 0.0 && eta.is_finite()) {
                    return bad("eta must be positive");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Lipschitz,
    Bb,
    /// BB was attempted but unavailable or rejected; Lipschitz size used.
    Fallback,
}

/// One PALM iteration `k → k+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PalmRecord {
    pub iteration: usize,
    /// Rank after pruning.
    pub s: usize,
    /// `F(U^{k+1}, V^{k+1})`
    pub f: f64,
    /// `F(Ũ^k, Ṽ^k)`
    pub f_start: f64,
    /// `F(U^{k+1}, Ṽ^k)`
    pub f_mid: f64,
    pub c: f64,
    pub d: f64,
    pub backtracks_u: usize,
    pub backtracks_v: usize,
    pub kind_u: StepKind,
    pub kind_v: StepKind,
    /// `‖∇_U F(Ũ^k, Ṽ^k)‖_F²`
    pub grad_u_sq: f64,
    /// `‖∇_V F(U^{k+1}, Ṽ^k)‖_F²`
    pub grad_v_sq: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PalmTrace {
    /// `F(U^0, V^0)` of the input pair.
    pub f_initial: f64,
    pub records: Vec<PalmRecord>,
    pub converged: bool,
}

impl PalmTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_value(&self) -> f64 {
        self.records.last().map_or(self.f_initial, |r| r.f)
    }

    /// `iteration,s,F,c_k,d_k,backtracks_u,backtracks_v` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,s,F,c_k,d_k,backtracks_u,backtracks_v")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{:.16e},{:.16e},{:.16e},{},{}",
                r.iteration, r.s, r.f, r.c, r.d, r.backtracks_u, r.backtracks_v
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PalmOutcome {
    pub factors: FactorPair,
    pub trace: PalmTrace,
}

/// A failed solve keeps the iterations completed so far.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{error} (after {} PALM iterations)", trace.len())]
pub struct PalmFailure {
    pub error: Error,
    pub trace: PalmTrace,
}

impl From<PalmFailure> for Error {
    fn from(f: PalmFailure) -> Self {
        f.error
    }
}

/// Drops columns with `‖U_j‖₂ < eps0` from both factors and renormalizes U rows.
pub fn prune_columns(fp: &FactorPair, eps0: f64) -> Result<FactorPair> {
    let norms = fp.u().col_norms();
    let keep: Vec<usize> = (0..norms.len()).filter(|&j| norms[j] >= eps0).collect();
    if keep.is_empty() {
        return Err(Error::Internal("pruning removed every column".into()));
    }
    if keep.len() == norms.len() {
        return Ok(fp.clone());
    }
    let mut u = fp.u().select_columns(&keep);
    let v = fp.v().select_columns(&keep);
    for i in 0..u.rows() {
        let row = u.row_mut(i);
        let sum: f64 = row.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::Internal(format!("row {i} of U vanished under pruning")));
        }
        row.iter_mut().for_each(|a| *a /= sum);
    }
    Ok(FactorPair::from_parts(u, v))
}

/// `U ← proj_row(U − c∇_U F(U, V))`
pub fn palm_step_u(ctx: &LossContext, fp: &FactorPair, c: f64) -> Result<FactorPair> {
    let g = Evaluation::new(ctx, fp).grad_u(fp)?;
    let u = descend_rows(fp.u(), &g, c)?;
    Ok(FactorPair::from_parts(u, fp.v().clone()))
}

/// `V ← proj_col(V − d∇_V F(U, V))`; call after the U step so U is the updated block.
pub fn palm_step_v(ctx: &LossContext, fp: &FactorPair, d: f64) -> Result<FactorPair> {
    let g = Evaluation::new(ctx, fp).grad_v(fp)?;
    let v = descend_cols(fp.v(), &g, d)?;
    Ok(FactorPair::from_parts(fp.u().clone(), v))
}

fn descend_rows(u: &DenseMatrix, g: &DenseMatrix, c: f64) -> Result<DenseMatrix> {
    let mut y = u.clone();
    y.axpy(-c, g)?;
    project_row_stochastic(&y)
}

fn descend_cols(v: &DenseMatrix, g: &DenseMatrix, d: f64) -> Result<DenseMatrix> {
    let mut y = v.clone();
    y.axpy(-d, g)?;
    project_col_stochastic(&y)
}

/// `(1/(γ₁L1(V)), 1/(γ₂L2(U)))` at the given pair.
pub fn step_sizes_lipschitz(
    ctx: &LossContext,
    fp: &FactorPair,
    eps0: f64,
    gamma1: f64,
    gamma2: f64,
) -> (f64, f64) {
    (
        1.0 / (gamma1 * lipschitz_u(ctx, fp.v(), eps0)),
        1.0 / (gamma2 * lipschitz_v(ctx, fp.u())),
    )
}

/// BB candidate from a step `S` and gradient change `Y`: `|⟨S,Y⟩|/‖Y‖²` on odd
/// iterations, `‖S‖²/|⟨S,Y⟩|` on even ones. `None` when `⟨S,Y⟩ = 0`.
pub fn bb_step_candidate(s: &DenseMatrix, y: &DenseMatrix, iteration: usize) -> Option<f64> {
    let sy = s.dot(y).ok()?.abs();
    if !(sy > 0.0) || !sy.is_finite() {
        return None;
    }
    let step = if iteration % 2 == 1 {
        sy / y.frobenius_sq()
    } else {
        s.frobenius_sq() / sy
    };
    (step.is_finite() && step > 0.0).then_some(step)
}

/// Mean of the most recent reference values (fewer when history is short).
pub fn nonmonotone_reference(values: &VecDeque<f64>) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

struct BlockResult {
    next: DenseMatrix,
    eval: Evaluation,
    step: f64,
    backtracks: usize,
    kind: StepKind,
}

struct BbState {
    delta: f64,
    eta: f64,
    refs_u: VecDeque<f64>,
    refs_v: VecDeque<f64>,
    pair_u: Option<(DenseMatrix, DenseMatrix)>,
    pair_v: Option<(DenseMatrix, DenseMatrix)>,
}

fn push_ref(q: &mut VecDeque<f64>, f: f64) {
    q.push_back(f);
    while q.len() > NONMONOTONE_WINDOW {
        q.pop_front();
    }
}

/// Runs PALM from `fp0` until the windowed relative decrease drops below
/// `local_tol` or `max_inner_iters` iterations are spent.
pub fn run_palm(
    ctx: &LossContext,
    fp0: &FactorPair,
    cfg: &SolverConfig,
) -> std::result::Result<PalmOutcome, PalmFailure> {
    let mut trace = PalmTrace::default();
    let fail = |error: Error, trace: &PalmTrace| PalmFailure {
        error,
        trace: trace.clone(),
    };
    cfg.validate().map_err(|e| fail(e, &trace))?;
    if fp0.dim() != ctx.dim() {
        return Err(fail(
            Error::dims(format!("{} rows", ctx.dim()), format!("{} rows", fp0.dim())),
            &trace,
        ));
    }
    fp0.check_feasible().map_err(|e| fail(e, &trace))?;

    let mut bb = match cfg.step_policy {
        StepPolicy::Bb { delta, eta } => Some(BbState {
            delta,
            eta,
            refs_u: VecDeque::new(),
            refs_v: VecDeque::new(),
            pair_u: None,
            pair_v: None,
        }),
        StepPolicy::Lipschitz { .. } => None,
    };
    let (gamma1, gamma2) = match cfg.step_policy {
        StepPolicy::Lipschitz { gamma1, gamma2 } => (gamma1, gamma2),
        StepPolicy::Bb { .. } => (FALLBACK_GAMMA, FALLBACK_GAMMA),
    };

    let mut current = fp0.clone();
    let mut current_eval = Evaluation::new(ctx, &current);
    trace.f_initial = current_eval.value();
    if !trace.f_initial.is_finite() {
        return Err(fail(Error::Numeric("non-finite initial objective".into()), &trace));
    }
    let mut history: VecDeque<f64> = VecDeque::from([trace.f_initial]);

    for k in 0..cfg.max_inner_iters {
        let pruned = prune_columns(&current, cfg.eps0).map_err(|e| fail(e, &trace))?;
        if pruned.rank() != current.rank() {
            current_eval = Evaluation::new(ctx, &pruned);
            if let Some(bb) = bb.as_mut() {
                bb.pair_u = None;
                bb.pair_v = None;
            }
        }
        let (u0, v0) = (pruned.u(), pruned.v());
        let f_start = current_eval.value();
        let grad_u = current_eval
            .grad_u_parts(u0, v0)
            .map_err(|e| fail(e, &trace))?;
        let grad_u_sq = grad_u.frobenius_sq();

        // U block
        let lip_c = 1.0 / (gamma1 * lipschitz_u(ctx, v0, cfg.eps0));
        let u_block = match bb.as_mut() {
            None => lipschitz_block_u(ctx, u0, v0, &grad_u, lip_c, StepKind::Lipschitz),
            Some(bb) => {
                push_ref(&mut bb.refs_u, f_start);
                let reference = nonmonotone_reference(&bb.refs_u);
                let candidate = bb
                    .pair_u
                    .as_ref()
                    .and_then(|(s, y)| bb_step_candidate(s, y, k));
                let accepted = candidate.and_then(|c0| {
                    backtrack(c0, bb.delta, |c| {
                        let next = descend_rows(u0, &grad_u, c).ok()?;
                        let eval = Evaluation::from_factors(ctx, &next, v0);
                        let ok = eval.value() <= reference - bb.eta * c * grad_u_sq;
                        Some((ok, next, eval))
                    })
                });
                match accepted {
                    Some(r) => Ok(r),
                    None => lipschitz_block_u(ctx, u0, v0, &grad_u, lip_c, StepKind::Fallback),
                }
            }
        }
        .map_err(|e| fail(e, &trace))?;
        let u1 = &u_block.next;
        let mid = &u_block.eval;
        let f_mid = mid.value();
        if !f_mid.is_finite() {
            return Err(fail(Error::Numeric(format!("non-finite objective at iteration {k}")), &trace));
        }
        let grad_v = mid.grad_v_parts(u1, v0).map_err(|e| fail(e, &trace))?;
        let grad_v_sq = grad_v.frobenius_sq();
        if let Some(bb) = bb.as_mut() {
            // Y_U needs ∇_U at (U^{k+1}, Ṽ^k), undefined if a column of U^{k+1} vanished.
            bb.pair_u = mid.grad_u_parts(u1, v0).ok().map(|g1| {
                (
                    u1.sub(u0).expect("same shape"),
                    g1.sub(&grad_u).expect("same shape"),
                )
            });
        }

        // V block
        let lip_d = 1.0 / (gamma2 * lipschitz_v(ctx, u1));
        let v_block = match bb.as_mut() {
            None => lipschitz_block_v(ctx, u1, v0, &grad_v, lip_d, StepKind::Lipschitz),
            Some(bb) => {
                push_ref(&mut bb.refs_v, f_mid);
                let reference = nonmonotone_reference(&bb.refs_v);
                let candidate = bb
                    .pair_v
                    .as_ref()
                    .and_then(|(s, y)| bb_step_candidate(s, y, k));
                let accepted = candidate.and_then(|d0| {
                    backtrack(d0, bb.delta, |d| {
                        let next = descend_cols(v0, &grad_v, d).ok()?;
                        let eval = Evaluation::from_factors(ctx, u1, &next);
                        let ok = eval.value() <= reference - bb.eta * d * grad_v_sq;
                        Some((ok, next, eval))
                    })
                });
                match accepted {
                    Some(r) => Ok(r),
                    None => lipschitz_block_v(ctx, u1, v0, &grad_v, lip_d, StepKind::Fallback),
                }
            }
        }
        .map_err(|e| fail(e, &trace))?;
        let v1 = &v_block.next;
        let f = v_block.eval.value();
        if !f.is_finite() {
            return Err(fail(Error::Numeric(format!("non-finite objective at iteration {k}")), &trace));
        }
        if let Some(bb) = bb.as_mut() {
            bb.pair_v = v_block.eval.grad_v_parts(u1, v1).ok().map(|g1| {
                (
                    v1.sub(v0).expect("same shape"),
                    g1.sub(&grad_v).expect("same shape"),
                )
            });
        }

        trace.records.push(PalmRecord {
            iteration: k,
            s: pruned.rank(),
            f,
            f_start,
            f_mid,
            c: u_block.step,
            d: v_block.step,
            backtracks_u: u_block.backtracks,
            backtracks_v: v_block.backtracks,
            kind_u: u_block.kind,
            kind_v: v_block.kind,
            grad_u_sq,
            grad_v_sq,
        });
        current = FactorPair::from_parts(u_block.next, v_block.next);
        current_eval = v_block.eval;

        if history.len() >= cfg.local_window {
            let mean = history.iter().sum::<f64>() / history.len() as f64;
            if locally_converged(mean, f, cfg.local_tol) {
                trace.converged = true;
                break;
            }
        }
        history.push_back(f);
        while history.len() > cfg.local_window {
            history.pop_front();
        }
    }
    Ok(PalmOutcome {
        factors: current,
        trace,
    })
}

/// `(f̄ − f)/f < tol`; a zero objective counts as converged.
fn locally_converged(mean: f64, f: f64, tol: f64) -> bool {
    if f <= 0.0 {
        return true;
    }
    (mean - f) / f < tol
}

fn backtrack<F>(step0: f64, delta: f64, mut attempt: F) -> Option<BlockResult>
where
    F: FnMut(f64) -> Option<(bool, DenseMatrix, Evaluation)>,
{
    let mut step = step0;
    for p in 0..=MAX_BACKTRACKS {
        let (ok, next, eval) = attempt(step)?;
        if ok {
            return Some(BlockResult {
                next,
                eval,
                step,
                backtracks: p,
                kind: StepKind::Bb,
            });
        }
        step *= delta;
    }
    None
}

fn lipschitz_block_u(
    ctx: &LossContext,
    u0: &DenseMatrix,
    v0: &DenseMatrix,
    grad: &DenseMatrix,
    c: f64,
    kind: StepKind,
) -> Result<BlockResult> {
    let next = descend_rows(u0, grad, c)?;
    let eval = Evaluation::from_factors(ctx, &next, v0);
    Ok(BlockResult {
        next,
        eval,
        step: c,
        backtracks: 0,
        kind,
    })
}

fn lipschitz_block_v(
    ctx: &LossContext,
    u1: &DenseMatrix,
    v0: &DenseMatrix,
    grad: &DenseMatrix,
    d: f64,
    kind: StepKind,
) -> Result<BlockResult> {
    let next = descend_cols(v0, grad, d)?;
    let eval = Evaluation::from_factors(ctx, u1, &next);
    Ok(BlockResult {
        next,
        eval,
        step: d,
        backtracks: 0,
        kind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{estimate_transition, generate_ground_truth, simulate_trajectory, EmpiricalChain};
    use crate::dense::{ProbVector, RngStream};
    use crate::objective::objective_f;

    fn sampled_ctx(seed: u64, d: usize, r: usize, lambda: f64) -> LossContext {
        let mut rng = RngStream::new(seed);
        let gt = generate_ground_truth(&mut rng, d, r).unwrap();
        let t = simulate_trajectory(&mut rng, &gt, 20 * d * d).unwrap();
        LossContext::new(estimate_transition(&t), lambda).unwrap()
    }

    fn exact_ctx(seed: u64, d: usize, r: usize, lambda: f64) -> LossContext {
        let mut rng = RngStream::new(seed);
        let gt = generate_ground_truth(&mut rng, d, r).unwrap();
        let chain = EmpiricalChain::new(gt.p().clone(), gt.xi().clone()).unwrap();
        LossContext::new(chain, lambda).unwrap()
    }

    fn lipschitz_cfg() -> SolverConfig {
        SolverConfig {
            step_policy: StepPolicy::Lipschitz {
                gamma1: 1.1,
                gamma2: 1.1,
            },
            max_inner_iters: 300,
            ..SolverConfig::default()
        }
    }

    fn assert_feasible(fp: &FactorPair) {
        assert!(fp.u().min_entry() >= 0.0 && fp.v().min_entry() >= 0.0);
        for s in fp.u().row_sums() {
            assert!((s - 1.0).abs() <= 1e-10);
        }
        for s in fp.v().col_sums() {
            assert!((s - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn prune_examples() {
        let fp = FactorPair::random(&mut RngStream::new(1), 4, 3);
        assert_eq!(prune_columns(&fp, 1e-14).unwrap(), fp);

        let u = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let v = DenseMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let pruned = prune_columns(&FactorPair::new(u, v).unwrap(), 1e-14).unwrap();
        assert_eq!(pruned.rank(), 1);

        let u = DenseMatrix::from_rows(&[vec![1.0 - 1e-15, 1e-15], vec![1.0, 0.0]]).unwrap();
        let v = DenseMatrix::from_rows(&[vec![0.25, 0.5], vec![0.75, 0.5]]).unwrap();
        let pruned = prune_columns(&FactorPair::from_parts(u, v), 1e-14).unwrap();
        assert_eq!(pruned.rank(), 1);
        assert_eq!(pruned.v().col(0), vec![0.25, 0.75]);
        for s in pruned.u().row_sums() {
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn tiny_steps_leave_iterate_unchanged() {
        let ctx = sampled_ctx(2, 6, 2, 1e-3);
        let fp = FactorPair::random(&mut RngStream::new(3), 6, 3);
        let u = palm_step_u(&ctx, &fp, 1e-300).unwrap();
        assert!(u.u().max_abs_diff(fp.u()).unwrap() <= 1e-12);
        let v = palm_step_v(&ctx, &fp, 1e-300).unwrap();
        assert!(v.v().max_abs_diff(fp.v()).unwrap() <= 1e-12);
    }

    #[test]
    fn one_by_one_problem_is_fixed() {
        let chain = EmpiricalChain::new(
            DenseMatrix::new(1, 1, vec![1.0]).unwrap(),
            ProbVector::new(vec![1.0]).unwrap(),
        )
        .unwrap();
        let ctx = LossContext::new(chain, 0.5).unwrap();
        let fp = FactorPair::new(DenseMatrix::identity(1), DenseMatrix::identity(1)).unwrap();
        assert_eq!(palm_step_u(&ctx, &fp, 1.0).unwrap(), fp);
        assert_eq!(palm_step_v(&ctx, &fp, 1.0).unwrap(), fp);
        for cfg in [SolverConfig::default(), lipschitz_cfg()] {
            let out = run_palm(&ctx, &fp, &cfg).unwrap();
            assert!(out.trace.converged);
            assert!(out.trace.len() <= cfg.local_window + 1);
            assert!((out.trace.final_value() - 0.5).abs() <= 1e-12);
        }
    }

    #[test]
    fn lipschitz_step_descends() {
        for seed in 0..5 {
            let ctx = sampled_ctx(10 + seed, 8, 2, 1e-3);
            let fp = FactorPair::random(&mut RngStream::new(20 + seed), 8, 4);
            let f0 = objective_f(&ctx, &fp).unwrap();
            let (c, _) = step_sizes_lipschitz(&ctx, &fp, 1e-14, 1.1, 1.1);
            let mid = palm_step_u(&ctx, &fp, c).unwrap();
            let f1 = objective_f(&ctx, &mid).unwrap();
            let (_, d) = step_sizes_lipschitz(&ctx, &mid, 1e-14, 1.1, 1.1);
            let next = palm_step_v(&ctx, &mid, d).unwrap();
            let f2 = objective_f(&ctx, &next).unwrap();
            assert!(f1 <= f0 && f2 <= f1, "{f0} {f1} {f2}");
        }
    }

    #[test]
    fn lipschitz_sizes() {
        let chain = EmpiricalChain::new(
            DenseMatrix::new(1, 1, vec![1.0]).unwrap(),
            ProbVector::new(vec![1.0]).unwrap(),
        )
        .unwrap();
        let ctx = LossContext::new(chain, 1.0).unwrap();
        let fp = FactorPair::new(DenseMatrix::identity(1), DenseMatrix::identity(1)).unwrap();
        let (c, d) = step_sizes_lipschitz(&ctx, &fp, 1e-14, 1.1, 1.1);
        assert_eq!(c, 1.0 / (1.1 * (1.0 + 1e14)));
        assert_eq!(d, 1.0 / (1.1 * 2.0));

        let ctx = sampled_ctx(4, 6, 2, 1e-3);
        let fp = FactorPair::random(&mut RngStream::new(5), 6, 3);
        let (c1, d1) = step_sizes_lipschitz(&ctx, &fp, 1e-14, 1.1, 1.1);
        assert!(c1 > 0.0 && c1.is_finite() && d1 > 0.0 && d1.is_finite());
        let doubled = ctx.with_lambda(2e-3).unwrap();
        let (c2, _) = step_sizes_lipschitz(&doubled, &fp, 1e-14, 1.1, 1.1);
        assert!(c2 < c1);
    }

    #[test]
    fn bb_candidates_on_quadratic() {
        // f(x) = a x²/2: y = a s, both BB rules give 1/a
        let a = 3.5;
        let s = DenseMatrix::new(1, 1, vec![0.2]).unwrap();
        let y = s.scale(a);
        assert!((bb_step_candidate(&s, &y, 1).unwrap() - 1.0 / a).abs() < 1e-15);
        assert!((bb_step_candidate(&s, &y, 2).unwrap() - 1.0 / a).abs() < 1e-15);
        let y = DenseMatrix::new(1, 2, vec![1.0, 0.0]).unwrap();
        let s = DenseMatrix::new(1, 2, vec![0.0, 1.0]).unwrap();
        assert_eq!(bb_step_candidate(&s, &y, 1), None);
        assert_eq!(bb_step_candidate(&s, &y, 2), None);
    }

    #[test]
    fn lipschitz_trace_non_increasing() {
        for seed in 0..3 {
            let ctx = sampled_ctx(30 + seed, 10, 3, 1e-4);
            let fp = FactorPair::random(&mut RngStream::new(40 + seed), 10, 5);
            let out = run_palm(&ctx, &fp, &lipschitz_cfg()).unwrap();
            let mut prev = out.trace.f_initial;
            for r in &out.trace.records {
                assert!(r.f <= prev + 1e-12 * prev.abs(), "{} > {prev}", r.f);
                assert!(r.f_mid <= r.f_start + 1e-12 * r.f_start.abs());
                prev = r.f;
            }
            assert_feasible(&out.factors);
        }
    }

    #[test]
    fn bb_trace_satisfies_nonmonotone_rule() {
        let ctx = sampled_ctx(50, 12, 3, 1e-4);
        let fp = FactorPair::random(&mut RngStream::new(51), 12, 6);
        let cfg = SolverConfig::default();
        let out = run_palm(&ctx, &fp, &cfg).unwrap();
        let eta = 1e-4;
        let recs = &out.trace.records;
        let mut bb_steps = 0;
        for (k, r) in recs.iter().enumerate() {
            let lo = k.saturating_sub(NONMONOTONE_WINDOW - 1);
            let n = (k - lo + 1) as f64;
            let ref_u = recs[lo..=k].iter().map(|r| r.f_start).sum::<f64>() / n;
            let ref_v = recs[lo..=k].iter().map(|r| r.f_mid).sum::<f64>() / n;
            if r.kind_u == StepKind::Bb {
                bb_steps += 1;
                assert!(r.f_mid <= ref_u - eta * r.c * r.grad_u_sq);
            }
            if r.kind_v == StepKind::Bb {
                assert!(r.f <= ref_v - eta * r.d * r.grad_v_sq);
            }
        }
        assert!(bb_steps > 0);
        assert_feasible(&out.factors);
    }

    #[test]
    fn runs_are_deterministic() {
        let ctx = sampled_ctx(60, 8, 2, 1e-4);
        let fp = FactorPair::random(&mut RngStream::new(61), 8, 4);
        let a = run_palm(&ctx, &fp, &SolverConfig::default()).unwrap();
        let b = run_palm(&ctx, &fp, &SolverConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bb_reduces_objective_substantially() {
        let ctx = exact_ctx(70, 30, 3, 1e-6);
        let fp = FactorPair::random(&mut RngStream::new(71), 30, 6);
        let out = run_palm(&ctx, &fp, &SolverConfig::default()).unwrap();
        assert!(out.trace.converged);
        assert!(out.trace.final_value() < 0.5 * out.trace.f_initial);
    }

    #[test]
    fn trace_csv_header_and_rows() {
        let ctx = sampled_ctx(80, 5, 2, 1e-3);
        let fp = FactorPair::random(&mut RngStream::new(81), 5, 2);
        let out = run_palm(&ctx, &fp, &SolverConfig::default()).unwrap();
        let mut buf = Vec::new();
        out.trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iteration,s,F,c_k,d_k,backtracks_u,backtracks_v");
        assert_eq!(lines.len(), out.trace.len() + 1);
        assert_eq!(lines[1].split(',').count(), 7);
    }

    #[test]
    fn invalid_config_rejected() {
        let ctx = sampled_ctx(1, 3, 1, 1e-3);
        let fp = FactorPair::random(&mut RngStream::new(1), 3, 1);
        let cfg = SolverConfig {
            step_policy: StepPolicy::Lipschitz {
                gamma1: 1.0,
                gamma2: 2.0,
            },
            ..SolverConfig::default()
        };
        assert!(matches!(run_palm(&ctx, &fp, &cfg), Err(PalmFailure { error: Error::InvalidInput(_), .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn feasibility_and_rank_monotone(seed in 0u64..10_000, d in 2usize..9, s in 1usize..6) {
                let ctx = sampled_ctx(seed, d, 1.max(d / 3), 1e-3);
                let fp = FactorPair::random(&mut RngStream::new(seed ^ 0xabc), d, s);
                let cfg = SolverConfig { max_inner_iters: 60, ..SolverConfig::default() };
                let out = run_palm(&ctx, &fp, &cfg).unwrap();
                assert_feasible(&out.factors);
                let mut prev = s;
                for r in &out.trace.records {
                    prop_assert!(r.s <= prev);
                    prev = r.s;
                }
            }
        }
    }
}
