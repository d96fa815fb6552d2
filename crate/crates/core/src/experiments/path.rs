//! Warm-restart regularization paths.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::chain::EmpiricalChain;
use crate::dense::{DenseMatrix, RngStream};
use crate::diagnostics::{diagnose, recovery_errors, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::objective::{objective_f, FactorPair, LossContext};
use crate::palm::SolverConfig;
use crate::rank::{adapt_rank, RankAdaptConfig, Termination};

/// Descending geometric grid from `hi` to `lo` with `per_decade` points per decade.
pub fn geometric_grid(hi: f64, lo: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(hi > 0.0 && lo > 0.0 && hi.is_finite() && lo.is_finite()) || lo > hi || per_decade == 0 {
        return Err(Error::InvalidInput(format!(
            "grid needs 0 < lo <= hi and a positive density, got hi={hi} lo={lo} per_decade={per_decade}"
        )));
    }
    let steps = ((hi / lo).log10() * per_decade as f64).round() as usize;
    Ok((0..=steps)
        .map(|k| hi * 10f64.powf(-(k as f64) / per_decade as f64))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub solver: SolverConfig,
    pub rank: RankAdaptConfig,
    /// Rank of the random starting pair at the first grid point.
    pub s0: usize,
    /// Compute KKT, certificate and duality-gap diagnostics per point.
    pub diagnostics: bool,
    /// Omega restarts used for per-point diagnostics.
    pub diagnostics_restarts: usize,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            rank: RankAdaptConfig::default(),
            s0: 10,
            diagnostics: true,
            diagnostics_restarts: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub s_hat: usize,
    pub objective: f64,
    /// `F_λ` of the warm-start pair at this λ.
    pub warm_start_objective: f64,
    pub termination: Termination,
    pub palm_iterations: usize,
    /// Against the supplied ground truth.
    pub rel_re: Option<f64>,
    pub diagnostics: Option<DiagnosticsRecord>,
    /// Set when the solve or its diagnostics failed; excluded from the argmin.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub points: Vec<PathPoint>,
    /// Terminal factors per grid point, aligned with `points`.
    pub factors: Vec<FactorPair>,
    pub lambda_star: Option<f64>,
    pub rel_re_star: Option<f64>,
}

impl PathResult {
    /// Columns `lambda,s_hat,F,relRE,relLE1,relLE2,GE,relDG`; missing values are empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "lambda,s_hat,F,relRE,relLE1,relLE2,GE,relDG")?;
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.16e}"));
        for p in &self.points {
            let d = p.diagnostics.as_ref();
            writeln!(
                w,
                "{:.16e},{},{:.16e},{},{},{},{},{}",
                p.lambda,
                p.s_hat,
                p.objective,
                opt(p.rel_re),
                opt(d.map(|d| d.rel_le1)),
                opt(d.map(|d| d.rel_le2)),
                opt(d.map(|d| d.ge)),
                opt(d.map(|d| d.rel_dg)),
            )?;
        }
        Ok(())
    }
}

/// Solves along a strictly decreasing λ grid, starting each point from the
/// previous terminal pair. The first point starts from a random rank-`s0` pair.
pub fn run_path(
    chain: &EmpiricalChain,
    grid: &[f64],
    cfg: &PathConfig,
    ground_truth: Option<&DenseMatrix>,
    rng: &mut RngStream,
) -> Result<PathResult> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty λ grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidInput("λ grid must be strictly decreasing".into()));
    }
    if cfg.s0 == 0 {
        return Err(Error::InvalidInput("s0 must be at least 1".into()));
    }
    let d = chain.dim();
    let mut start = FactorPair::random(rng, d, cfg.s0);
    let mut points = Vec::with_capacity(grid.len());
    let mut factors = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let ctx = LossContext::new(chain.clone(), lambda)?;
        let warm = objective_f(&ctx, &start)?;
        let report = adapt_rank(&ctx, &start, &cfg.solver, &cfg.rank, rng)?;
        let mut error = match &report.termination {
            Termination::Failed { message } => Some(message.clone()),
            _ => None,
        };
        let rel_re = match ground_truth.map(|p| recovery_errors(&ctx, &report.factors.product(), p)) {
            Some(Ok((re, _))) => Some(re),
            Some(Err(e)) => {
                error.get_or_insert(e.to_string());
                None
            }
            None => None,
        };
        let diagnostics = if cfg.diagnostics {
            match diagnose(&ctx, &report.factors, ground_truth, None, rng, cfg.diagnostics_restarts) {
                Ok(d) => Some(d),
                Err(e) => {
                    error.get_or_insert(e.to_string());
                    None
                }
            }
        } else {
            None
        };
        points.push(PathPoint {
            lambda,
            s_hat: report.rank(),
            objective: report.objective,
            warm_start_objective: warm,
            termination: report.termination.clone(),
            palm_iterations: report.palm_iterations(),
            rel_re,
            diagnostics,
            error,
        });
        start = report.factors.clone();
        factors.push(report.factors);
    }
    let best = points
        .iter()
        .filter(|p| p.error.is_none())
        .filter_map(|p| p.rel_re.map(|r| (p.lambda, r)))
        .fold(None, |acc: Option<(f64, f64)>, (l, r)| match acc {
            Some((_, br)) if br <= r => acc,
            _ => Some((l, r)),
        });
    Ok(PathResult {
        points,
        factors,
        lambda_star: best.map(|b| b.0),
        rel_re_star: best.map(|b| b.1),
    })
}

/// `ln y = A + B ln x` by ordinary least squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<RegressionFit> {
    if xs.len() != ys.len() {
        return Err(Error::dims(format!("{} responses", xs.len()), ys.len().to_string()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput("log-log fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if lx.len() < 2 || !(sxx > 0.0) {
        return Err(Error::DegenerateFit("need at least two distinct x values".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { (sxy * sxy / (sxx * syy)).min(1.0) } else { 1.0 };
    Ok(RegressionFit {
        intercept: my - slope * mx,
        slope,
        r_squared,
    })
}

/// Best path point of one replicate trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    /// `n/d²`
    pub ratio: f64,
    pub replicate: usize,
    pub lambda_star: f64,
    pub rel_re_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSizeStudy {
    pub records: Vec<StudyRecord>,
    /// `ln relRE* = A + B ln(n/d²)` over the per-ratio means of `relRE*`.
    pub fit: RegressionFit,
}

impl SampleSizeStudy {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "ratio,replicate,lambda_star,relRE_star")?;
        for r in &self.records {
            writeln!(
                w,
                "{:.16e},{},{:.16e},{:.16e}",
                r.ratio, r.replicate, r.lambda_star, r.rel_re_star
            )?;
        }
        Ok(())
    }
}

/// For each `n/d²` in `ratios`, simulates `replicates` trajectories of length
/// `n = ratio·d²` from `truth`, runs a path on each and regresses the mean
/// `relRE*` on the ratio. Replicates run in parallel on forked streams.
pub fn sample_size_study(
    truth: &crate::chain::GroundTruthChain,
    ratios: &[f64],
    replicates: usize,
    grid: &[f64],
    cfg: &PathConfig,
    rng: &RngStream,
) -> Result<SampleSizeStudy> {
    use crate::chain::{estimate_transition, simulate_trajectory};
    use rayon::prelude::*;

    if replicates == 0 || ratios.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidInput("need positive ratios and at least one replicate".into()));
    }
    let d = truth.dim();
    let jobs: Vec<(usize, usize)> = (0..ratios.len())
        .flat_map(|k| (0..replicates).map(move |rep| (k, rep)))
        .collect();
    let records: Vec<StudyRecord> = jobs
        .par_iter()
        .map(|&(k, rep)| {
            let mut r = rng.fork((k * replicates + rep) as u64);
            let n = (ratios[k] * (d * d) as f64).round() as usize;
            let traj = simulate_trajectory(&mut r, truth, n)?;
            let path = run_path(&estimate_transition(&traj), grid, cfg, Some(truth.p()), &mut r)?;
            match (path.lambda_star, path.rel_re_star) {
                (Some(lambda_star), Some(rel_re_star)) => Ok(StudyRecord {
                    ratio: ratios[k],
                    replicate: rep,
                    lambda_star,
                    rel_re_star,
                }),
                _ => Err(Error::EmptyData(format!(
                    "no usable path point at n/d² = {}, replicate {rep}",
                    ratios[k]
                ))),
            }
        })
        .collect::<Result<_>>()?;
    let means: Vec<f64> = ratios
        .iter()
        .map(|ratio| {
            let v: Vec<f64> = records.iter().filter(|r| r.ratio == *ratio).map(|r| r.rel_re_star).collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();
    let fit = fit_loglog(ratios, &means)?;
    Ok(SampleSizeStudy { records, fit })
}
