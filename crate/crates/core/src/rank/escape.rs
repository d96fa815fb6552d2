//! Escaping a non-global stationary point by appending one rank-one atom.

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::objective::{Evaluation, FactorPair, LossContext};

const WITNESS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum AppendOutcome {
    Improved {
        factors: FactorPair,
        kappa: f64,
        f_old: f64,
        f_new: f64,
    },
    /// Line search reached `κ < κ_min` without the required decrease.
    NoImprovement { f_old: f64, last_kappa: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppendConfig {
    pub kappa_min: f64,
    /// Required relative decrease: accept when `F_new < (1 − decrease)·F_old`.
    pub decrease: f64,
}

impl Default for AppendConfig {
    fn default() -> Self {
        Self {
            kappa_min: 1e-8,
            decrease: 1e-5,
        }
    }
}

fn check_witness(x: &[f64], d: usize, name: &str) -> Result<()> {
    if x.len() != d {
        return Err(Error::dims(format!("witness {name} of length {d}"), x.len().to_string()));
    }
    if x.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(Error::InvalidInput(format!("witness {name} must be finite and nonnegative")));
    }
    let n = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    if (n - 1.0).abs() > WITNESS_TOL {
        return Err(Error::InvalidInput(format!("witness {name} has norm {n}, expected 1")));
    }
    Ok(())
}

/// `Ū = [diag(1 − κū)Û, κū]`, `V̄ = [V̂, v̄/(1ᵀv̄)]`.
pub fn appended_pair(fp: &FactorPair, u_bar: &[f64], v_bar: &[f64], kappa: f64) -> FactorPair {
    let (d, s) = (fp.dim(), fp.rank());
    let mut u = DenseMatrix::zeros(d, s + 1);
    for i in 0..d {
        let shrink = 1.0 - kappa * u_bar[i];
        let row = u.row_mut(i);
        for (dst, src) in row[..s].iter_mut().zip(fp.u().row(i)) {
            *dst = shrink * src;
        }
        row[s] = kappa * u_bar[i];
    }
    let total: f64 = v_bar.iter().sum();
    let col: Vec<f64> = v_bar.iter().map(|a| a / total).collect();
    let v = fp.v().push_column(&col).expect("length d");
    FactorPair::from_parts(u, v)
}

/// Backtracks `κ = 0.5ᵖ/‖ū‖∞` until `F(Ū, V̄) < (1 − decrease)·F(Û, V̂)`.
pub fn append_column(
    ctx: &LossContext,
    fp: &FactorPair,
    u_bar: &[f64],
    v_bar: &[f64],
    cfg: &AppendConfig,
) -> Result<AppendOutcome> {
    let d = fp.dim();
    check_witness(u_bar, d, "u")?;
    check_witness(v_bar, d, "v")?;
    if !(cfg.kappa_min > 0.0) || !(cfg.decrease >= 0.0 && cfg.decrease < 1.0) {
        return Err(Error::InvalidInput("append line-search parameters out of range".into()));
    }
    let f_old = Evaluation::new(ctx, fp).value();
    let target = (1.0 - cfg.decrease) * f_old;
    let u_inf = u_bar.iter().fold(0.0f64, |m, a| m.max(*a));
    let mut kappa = 1.0 / u_inf;
    let mut last = kappa;
    while kappa >= cfg.kappa_min {
        let cand = appended_pair(fp, u_bar, v_bar, kappa);
        let f_new = Evaluation::new(ctx, &cand).value();
        if f_new < target {
            return Ok(AppendOutcome::Improved {
                factors: cand,
                kappa,
                f_old,
                f_new,
            });
        }
        last = kappa;
        kappa *= 0.5;
    }
    Ok(AppendOutcome::NoImprovement {
        f_old,
        last_kappa: last,
    })
}
