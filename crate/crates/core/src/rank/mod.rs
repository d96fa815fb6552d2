//! Global-optimality certificates, rank escape and compression, and the
//! adaptive-rank driver around PALM.

mod compress;
mod escape;
mod polar;

pub use compress::{remove_redundant, weighted_gram, CompressOutcome, Elimination};
pub use escape::{append_column, appended_pair, AppendConfig, AppendOutcome};
pub use polar::{omega_polar, PolarResult, MAX_ALTERNATIONS};

use serde::{Deserialize, Serialize};

use crate::dense::{sample_unit_nonneg, DenseMatrix, RngStream};
use crate::error::{Error, Result};
use crate::objective::{Evaluation, FactorPair, LossContext};
use crate::palm::{prune_columns, run_palm, PalmTrace, SolverConfig};

/// Test vectors are multiplied in blocks of this many columns.
const EARLY_RULE_BLOCK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StoppingRule {
    /// Pass iff the best atom found satisfies `σ ≤ (1 + eps_exa)λ`.
    Exact { eps_exa: f64 },
    /// Pass iff `φ(v) ≤ λ` on `samples` uniform test vectors.
    Early { samples: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankAdaptConfig {
    pub stopping_rule: StoppingRule,
    pub restarts_omega: usize,
    pub kappa_min: f64,
    pub append_decrease: f64,
    /// Cap on PALM runs; the rank cap `d² + 1` applies independently.
    pub max_outer_iters: usize,
}

impl Default for RankAdaptConfig {
    fn default() -> Self {
        Self {
            stopping_rule: StoppingRule::Exact { eps_exa: 0.1 },
            restarts_omega: 20,
            kappa_min: 1e-8,
            append_decrease: 1e-5,
            max_outer_iters: 200,
        }
    }
}

impl RankAdaptConfig {
    pub fn early(samples: usize) -> Self {
        Self {
            stopping_rule: StoppingRule::Early { samples },
            ..Self::default()
        }
    }

    pub fn exact(eps_exa: f64) -> Self {
        Self {
            stopping_rule: StoppingRule::Exact { eps_exa },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.stopping_rule {
            StoppingRule::Exact { eps_exa } if !(eps_exa > 0.0 && eps_exa.is_finite()) => {
                return Err(Error::InvalidInput("eps_exa must be positive".into()));
            }
            StoppingRule::Early { samples: 0 } => {
                return Err(Error::InvalidInput("early rule needs at least one sample".into()));
            }
            _ => {}
        }
        if !(self.kappa_min > 0.0) {
            return Err(Error::InvalidInput("kappa_min must be positive".into()));
        }
        if !(self.append_decrease >= 0.0 && self.append_decrease < 1.0) {
            return Err(Error::InvalidInput("append_decrease must lie in [0, 1)".into()));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidInput("max_outer_iters must be at least 1".into()));
        }
        Ok(())
    }

    fn append(&self) -> AppendConfig {
        AppendConfig {
            kappa_min: self.kappa_min,
            decrease: self.append_decrease,
        }
    }
}

/// `μ_i` = mean over `{j : û_ij ≠ 0}` of `λû_ij‖V̂_j‖/‖Û_j‖ + (∇g(X̂)V̂)_ij`.
pub fn compute_multiplier(ctx: &LossContext, fp: &FactorPair) -> Result<Vec<f64>> {
    let ev = Evaluation::new(ctx, fp);
    Ok(multiplier_from(&ev, fp, ctx.lambda())?)
}

pub(crate) fn multiplier_from(ev: &Evaluation, fp: &FactorPair, lambda: f64) -> Result<Vec<f64>> {
    // ∇g(X̂)V̂ = −Ξ̂²(P̂ − X̂)V̂
    let gv = ev.wresid.matmul(fp.v())?.scale(-1.0);
    let u = fp.u();
    let mut mu = vec![0.0; fp.dim()];
    for (i, m) in mu.iter_mut().enumerate() {
        let (mut acc, mut count) = (0.0, 0usize);
        for j in 0..fp.rank() {
            let uij = u[(i, j)];
            if uij != 0.0 {
                acc += lambda * uij * ev.v_norms[j] / ev.u_norms[j] + gv[(i, j)];
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::Infeasible(format!("row {i} of U is zero")));
        }
        *m = acc / count as f64;
    }
    Ok(mu)
}

/// `μ1ᵀ − ∇g(X̂)`
pub fn certificate_matrix(ctx: &LossContext, fp: &FactorPair, mu: &[f64]) -> DenseMatrix {
    let ev = Evaluation::new(ctx, fp);
    certificate_matrix_from(&ev, mu)
}

pub(crate) fn certificate_matrix_from(ev: &Evaluation, mu: &[f64]) -> DenseMatrix {
    // −∇g = Ξ̂²(P̂ − X̂)
    let mut a = ev.wresid.clone();
    for (i, m) in mu.iter().enumerate() {
        a.row_mut(i).iter_mut().for_each(|x| *x += m);
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub mu: Vec<f64>,
    /// Best atom value `ūᵀ(μ1ᵀ − ∇g)v̄`; a lower bound on the true maximum.
    pub sigma: f64,
    pub witness_u: Vec<f64>,
    pub witness_v: Vec<f64>,
    pub verdict: Verdict,
    pub rule: StoppingRule,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Checks `ūᵀ(μ1ᵀ − ∇g(X̂))v̄ ≤ λ` under the configured rule.
pub fn certify(
    ctx: &LossContext,
    fp: &FactorPair,
    cfg: &RankAdaptConfig,
    rng: &mut RngStream,
) -> Result<Certificate> {
    let ev = Evaluation::new(ctx, fp);
    let mu = multiplier_from(&ev, fp, ctx.lambda())?;
    let a = certificate_matrix_from(&ev, &mu);
    let lambda = ctx.lambda();
    match cfg.stopping_rule {
        StoppingRule::Exact { eps_exa } => {
            let r = omega_polar(&a, rng, cfg.restarts_omega)?;
            let verdict = if r.sigma <= (1.0 + eps_exa) * lambda {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
            Ok(Certificate {
                mu,
                sigma: r.sigma,
                witness_u: r.u,
                witness_v: r.v,
                verdict,
                rule: cfg.stopping_rule,
            })
        }
        StoppingRule::Early { samples } => {
            let (phi, u, v) = early_rule_worst(&a, samples, rng);
            let verdict = if phi <= lambda { Verdict::Pass } else { Verdict::Fail };
            Ok(Certificate {
                mu,
                sigma: phi,
                witness_u: u,
                witness_v: v,
                verdict,
                rule: cfg.stopping_rule,
            })
        }
    }
}

/// Largest `φ(v) = ‖[Av]₊‖` over `samples` uniform draws on the nonnegative
/// unit sphere, with `ū = [Av̄]₊/φ(v̄)` (or the best basis vector if `Av̄ ≤ 0`).
fn early_rule_worst(a: &DenseMatrix, samples: usize, rng: &mut RngStream) -> (f64, Vec<f64>, Vec<f64>) {
    let d = a.rows();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut done = 0;
    while done < samples {
        let block = EARLY_RULE_BLOCK.min(samples - done);
        let cols: Vec<Vec<f64>> = (0..block).map(|_| sample_unit_nonneg(rng, d)).collect();
        let vs = DenseMatrix::from_columns(&cols).expect("equal lengths");
        let av = a.matmul(&vs).expect("square");
        for (k, v) in cols.into_iter().enumerate() {
            let col = av.col(k);
            let (_, value) = polar::best_response(&col);
            if best.as_ref().map_or(true, |(b, _)| value > *b) {
                best = Some((value, v));
            }
        }
        done += block;
    }
    let (_, v) = best.expect("samples > 0");
    let (u, value) = polar::best_response(&a.matvec(&v).expect("square"));
    (value, u, v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RankEvent {
    Palm {
        s_start: usize,
        s_end: usize,
        f_start: f64,
        f_end: f64,
        iterations: usize,
        converged: bool,
        #[serde(skip)]
        trace: PalmTrace,
    },
    Compress {
        s_start: usize,
        s_end: usize,
        f_start: f64,
        f_end: f64,
        eliminations: Vec<Elimination>,
    },
    Certify {
        s: usize,
        sigma: f64,
        verdict: Verdict,
    },
    Append {
        s_start: usize,
        kappa: f64,
        f_start: f64,
        f_end: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    Certified,
    /// Append line search exhausted: treated as globally optimal.
    NoImprovement,
    RankCap,
    OuterIterCap,
    Failed { message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub factors: FactorPair,
    pub objective: f64,
    pub termination: Termination,
    pub events: Vec<RankEvent>,
    pub last_certificate: Option<Certificate>,
}

impl SolveReport {
    pub fn rank(&self) -> usize {
        self.factors.rank()
    }

    pub fn palm_iterations(&self) -> usize {
        self.events
            .iter()
            .map(|e| match e {
                RankEvent::Palm { iterations, .. } => *iterations,
                _ => 0,
            })
            .sum()
    }

    pub fn palm_traces(&self) -> impl Iterator<Item = &PalmTrace> {
        self.events.iter().filter_map(|e| match e {
            RankEvent::Palm { trace, .. } => Some(trace),
            _ => None,
        })
    }

    pub fn succeeded(&self) -> bool {
        !matches!(self.termination, Termination::Failed { .. })
    }
}

/// Alternates PALM, compression, certification and column appends until the
/// certificate passes or no appended atom gives sufficient decrease.
pub fn adapt_rank(
    ctx: &LossContext,
    fp0: &FactorPair,
    solver: &SolverConfig,
    cfg: &RankAdaptConfig,
    rng: &mut RngStream,
) -> Result<SolveReport> {
    solver.validate()?;
    cfg.validate()?;
    fp0.check_feasible()?;
    let d = ctx.dim();
    let rank_cap = d.saturating_mul(d).saturating_add(1);
    let mut fp = fp0.clone();
    let mut events = Vec::new();
    let mut last_certificate = None;
    let mut termination = Termination::OuterIterCap;

    for _ in 0..cfg.max_outer_iters {
        let s_start = fp.rank();
        let outcome = match run_palm(ctx, &fp, solver) {
            Ok(o) => o,
            Err(failure) => {
                events.push(palm_event(s_start, fp.rank(), &failure.trace));
                termination = Termination::Failed {
                    message: failure.error.to_string(),
                };
                break;
            }
        };
        fp = match prune_columns(&outcome.factors, solver.eps0) {
            Ok(p) => p,
            Err(e) => {
                termination = Termination::Failed { message: e.to_string() };
                break;
            }
        };
        events.push(palm_event(s_start, fp.rank(), &outcome.trace));

        let compressed = remove_redundant(ctx, &fp, solver.eps)?;
        if compressed.removed() > 0 {
            let f_start = compressed.eliminations[0].f_before;
            let f_end = compressed.eliminations.last().map_or(f_start, |e| e.f_after);
            events.push(RankEvent::Compress {
                s_start: fp.rank(),
                s_end: compressed.factors.rank(),
                f_start,
                f_end,
                eliminations: compressed.eliminations,
            });
            fp = compressed.factors;
            continue;
        }

        let cert = certify(ctx, &fp, cfg, rng)?;
        events.push(RankEvent::Certify {
            s: fp.rank(),
            sigma: cert.sigma,
            verdict: cert.verdict,
        });
        if cert.passed() {
            last_certificate = Some(cert);
            termination = Termination::Certified;
            break;
        }
        if fp.rank() >= rank_cap {
            last_certificate = Some(cert);
            termination = Termination::RankCap;
            break;
        }
        let outcome = append_column(ctx, &fp, &cert.witness_u, &cert.witness_v, &cfg.append())?;
        last_certificate = Some(cert);
        match outcome {
            AppendOutcome::Improved {
                factors,
                kappa,
                f_old,
                f_new,
            } => {
                events.push(RankEvent::Append {
                    s_start: fp.rank(),
                    kappa,
                    f_start: f_old,
                    f_end: f_new,
                });
                fp = factors;
            }
            AppendOutcome::NoImprovement { .. } => {
                termination = Termination::NoImprovement;
                break;
            }
        }
    }
    let objective = Evaluation::new(ctx, &fp).value();
    Ok(SolveReport {
        factors: fp,
        objective,
        termination,
        events,
        last_certificate,
    })
}

fn palm_event(s_start: usize, s_end: usize, trace: &PalmTrace) -> RankEvent {
    RankEvent::Palm {
        s_start,
        s_end,
        f_start: trace.f_initial,
        f_end: trace.final_value(),
        iterations: trace.len(),
        converged: trace.converged,
        trace: trace.clone(),
    }
}
