//! Weighted least-squares loss, the factorized objective `F_λ(U, V)` and its
//! partial gradients.

use serde::{Deserialize, Serialize};

use crate::chain::EmpiricalChain;
use crate::dense::{sample_simplex, DenseMatrix, RngStream};
use crate::error::{Error, Result};

/// Tolerance on row sums of U and column sums of V.
pub const FEASIBILITY_TOL: f64 = 1e-10;

/// `(U, V)` with U row-stochastic and V column-stochastic; `X = U·Vᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorPair {
    u: DenseMatrix,
    v: DenseMatrix,
}

impl FactorPair {
    pub fn new(u: DenseMatrix, v: DenseMatrix) -> Result<Self> {
        let fp = Self { u, v };
        fp.check_feasible()?;
        Ok(fp)
    }

    /// Skips the feasibility check; callers guarantee it (projections, exact algebra).
    pub(crate) fn from_parts(u: DenseMatrix, v: DenseMatrix) -> Self {
        debug_assert_eq!(u.shape(), v.shape());
        Self { u, v }
    }

    /// Random start: rows of U and columns of V uniform on their simplices.
    pub fn random(rng: &mut RngStream, d: usize, s: usize) -> Self {
        let mut u = DenseMatrix::zeros(d, s);
        for i in 0..d {
            u.row_mut(i).copy_from_slice(&sample_simplex(rng, s));
        }
        let cols: Vec<Vec<f64>> = (0..s).map(|_| sample_simplex(rng, d)).collect();
        let v = DenseMatrix::from_columns(&cols).expect("equal lengths");
        Self { u, v }
    }

    pub fn check_feasible(&self) -> Result<()> {
        if self.u.shape() != self.v.shape() {
            return Err(Error::dims(
                format!("V of shape {:?}", self.u.shape()),
                format!("{:?}", self.v.shape()),
            ));
        }
        if !self.u.is_finite() || !self.v.is_finite() {
            return Err(Error::Infeasible("non-finite factor entries".into()));
        }
        if self.u.min_entry() < 0.0 || self.v.min_entry() < 0.0 {
            return Err(Error::Infeasible("negative factor entries".into()));
        }
        if let Some((i, s)) = self
            .u
            .row_sums()
            .into_iter()
            .enumerate()
            .find(|(_, s)| (s - 1.0).abs() > FEASIBILITY_TOL)
        {
            return Err(Error::Infeasible(format!("row {i} of U sums to {s}")));
        }
        if let Some((j, s)) = self
            .v
            .col_sums()
            .into_iter()
            .enumerate()
            .find(|(_, s)| (s - 1.0).abs() > FEASIBILITY_TOL)
        {
            return Err(Error::Infeasible(format!("column {j} of V sums to {s}")));
        }
        Ok(())
    }

    pub fn u(&self) -> &DenseMatrix {
        &self.u
    }

    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    pub fn into_parts(self) -> (DenseMatrix, DenseMatrix) {
        (self.u, self.v)
    }

    pub fn dim(&self) -> usize {
        self.u.rows()
    }

    pub fn rank(&self) -> usize {
        self.u.cols()
    }

    pub fn product(&self) -> DenseMatrix {
        self.u.matmul_nt(&self.v).expect("same shape")
    }

    /// Reorders columns of both factors.
    pub fn permute_columns(&self, order: &[usize]) -> Self {
        Self {
            u: self.u.select_columns(order),
            v: self.v.select_columns(order),
        }
    }
}

/// Data-fidelity context: the empirical chain and the regularization weight.
#[derive(Debug, Clone)]
pub struct LossContext {
    chain: EmpiricalChain,
    lambda: f64,
    xi_sq: Vec<f64>,
}

impl LossContext {
    pub fn new(chain: EmpiricalChain, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidInput(format!(
                "regularization weight must be positive and finite, got {lambda}"
            )));
        }
        let xi_sq = chain.xi_sq();
        Ok(Self {
            chain,
            lambda,
            xi_sq,
        })
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.chain.clone(), lambda)
    }

    pub fn chain(&self) -> &EmpiricalChain {
        &self.chain
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.chain.dim()
    }

    pub fn xi(&self) -> &[f64] {
        self.chain.xi_hat()
    }

    /// Diagonal of Ξ̂².
    pub fn xi_sq(&self) -> &[f64] {
        &self.xi_sq
    }

    fn check_square(&self, x: &DenseMatrix) -> Result<()> {
        let d = self.dim();
        if x.shape() != (d, d) {
            return Err(Error::dims(format!("{d}x{d}"), format!("{:?}", x.shape())));
        }
        Ok(())
    }

    fn check_pair(&self, fp: &FactorPair) -> Result<()> {
        if fp.dim() != self.dim() {
            return Err(Error::dims(
                format!("factors with {} rows", self.dim()),
                format!("{} rows", fp.dim()),
            ));
        }
        Ok(())
    }

    /// `Ξ̂²(P̂ − X)`
    pub(crate) fn weighted_residual(&self, x: &DenseMatrix) -> DenseMatrix {
        let mut r = self.chain.p_hat().sub(x).expect("checked shape");
        for (i, w) in self.xi_sq.iter().enumerate() {
            r.row_mut(i).iter_mut().for_each(|a| *a *= w);
        }
        r
    }

    /// `‖Ξ̂P̂‖_F`
    pub fn data_norm(&self) -> f64 {
        crate::dense::weighted_frobenius(self.chain.p_hat(), self.xi()).expect("square")
    }
}

/// `g(X) = ½‖Ξ̂(P̂ − X)‖_F²`
pub fn loss_g(ctx: &LossContext, x: &DenseMatrix) -> Result<f64> {
    ctx.check_square(x)?;
    let p = ctx.chain.p_hat();
    let mut acc = 0.0;
    for (i, w) in ctx.xi_sq.iter().enumerate() {
        let row: f64 = p.row(i).iter().zip(x.row(i)).map(|(a, b)| (a - b) * (a - b)).sum();
        acc += w * row;
    }
    Ok(0.5 * acc)
}

/// `∇g(X) = −Ξ̂²(P̂ − X)`
pub fn grad_g(ctx: &LossContext, x: &DenseMatrix) -> Result<DenseMatrix> {
    ctx.check_square(x)?;
    Ok(ctx.weighted_residual(x).scale(-1.0))
}

/// `Σ_j ‖U_j‖₂‖V_j‖₂`, the factorization upper bound of the atomic regularizer.
pub fn regularizer_value(fp: &FactorPair) -> f64 {
    fp.u.col_norms()
        .iter()
        .zip(fp.v.col_norms())
        .map(|(a, b)| a * b)
        .sum()
}

/// `F_λ(U, V) = g(UVᵀ) + λ Σ_j ‖U_j‖‖V_j‖`
pub fn objective_f(ctx: &LossContext, fp: &FactorPair) -> Result<f64> {
    ctx.check_pair(fp)?;
    fp.check_feasible()?;
    Ok(Evaluation::new(ctx, fp).value())
}

/// `∇_U F = −Ξ̂²(P̂ − UVᵀ)V + λ U diag(‖V_j‖/‖U_j‖)`
pub fn grad_f_u(ctx: &LossContext, fp: &FactorPair) -> Result<DenseMatrix> {
    ctx.check_pair(fp)?;
    Evaluation::new(ctx, fp).grad_u(fp)
}

/// `∇_V F = −(P̂ − UVᵀ)ᵀΞ̂²U + λ V diag(‖U_j‖/‖V_j‖)`
pub fn grad_f_v(ctx: &LossContext, fp: &FactorPair) -> Result<DenseMatrix> {
    ctx.check_pair(fp)?;
    Evaluation::new(ctx, fp).grad_v(fp)
}

/// Block Lipschitz constants `(L1(V), L2(U))`:
/// `L1 = ‖Ξ̂‖_F²‖VᵀV‖_F + λ/ε₀`, `L2 = ‖UᵀΞ̂²U‖_F + λ√d‖U‖_F`.
pub fn lipschitz_moduli(ctx: &LossContext, fp: &FactorPair, eps0: f64) -> (f64, f64) {
    (lipschitz_u(ctx, fp.v(), eps0), lipschitz_v(ctx, fp.u()))
}

pub(crate) fn lipschitz_u(ctx: &LossContext, v: &DenseMatrix, eps0: f64) -> f64 {
    let xi_fro_sq: f64 = ctx.xi_sq.iter().sum();
    let vtv = v.matmul_tn(v).expect("same shape");
    xi_fro_sq * vtv.frobenius() + ctx.lambda / eps0
}

pub(crate) fn lipschitz_v(ctx: &LossContext, u: &DenseMatrix) -> f64 {
    let wu = u.scale_rows(&ctx.xi_sq).expect("d rows");
    let utw = u.matmul_tn(&wu).expect("same shape");
    utw.frobenius() + ctx.lambda * (ctx.dim() as f64).sqrt() * u.frobenius()
}

/// Everything needed for value and gradients at one point, computed once.
pub(crate) struct Evaluation {
    pub(crate) lambda: f64,
    /// Ξ̂²(P̂ − UVᵀ)
    pub(crate) wresid: DenseMatrix,
    pub(crate) loss: f64,
    pub(crate) u_norms: Vec<f64>,
    pub(crate) v_norms: Vec<f64>,
}

impl Evaluation {
    pub(crate) fn new(ctx: &LossContext, fp: &FactorPair) -> Self {
        Self::from_factors(ctx, fp.u(), fp.v())
    }

    pub(crate) fn from_factors(ctx: &LossContext, u: &DenseMatrix, v: &DenseMatrix) -> Self {
        let x = u.matmul_nt(v).expect("same shape");
        let p = ctx.chain.p_hat();
        let mut wresid = DenseMatrix::zeros(x.rows(), x.cols());
        let mut loss = 0.0;
        for (i, w) in ctx.xi_sq.iter().enumerate() {
            let mut row_sq = 0.0;
            for ((r, a), b) in wresid.row_mut(i).iter_mut().zip(p.row(i)).zip(x.row(i)) {
                let e = a - b;
                row_sq += e * e;
                *r = w * e;
            }
            loss += w * row_sq;
        }
        Self {
            lambda: ctx.lambda,
            wresid,
            loss: 0.5 * loss,
            u_norms: u.col_norms(),
            v_norms: v.col_norms(),
        }
    }

    pub(crate) fn regularizer(&self) -> f64 {
        self.u_norms.iter().zip(&self.v_norms).map(|(a, b)| a * b).sum()
    }

    pub(crate) fn value(&self) -> f64 {
        self.loss + self.lambda * self.regularizer()
    }

    pub(crate) fn grad_u_parts(&self, u: &DenseMatrix, v: &DenseMatrix) -> Result<DenseMatrix> {
        let ratio = self
            .u_norms
            .iter()
            .zip(&self.v_norms)
            .enumerate()
            .map(|(j, (nu, nv))| {
                if *nu > 0.0 {
                    Ok(nv / nu)
                } else {
                    Err(Error::NotDifferentiable { column: j })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut g = u.scale_cols(&ratio)?.scale(self.lambda);
        g.axpy(-1.0, &self.wresid.matmul(v)?)?;
        Ok(g)
    }

    pub(crate) fn grad_v_parts(&self, u: &DenseMatrix, v: &DenseMatrix) -> Result<DenseMatrix> {
        let ratio = self
            .u_norms
            .iter()
            .zip(&self.v_norms)
            .enumerate()
            .map(|(j, (nu, nv))| {
                if *nv > 0.0 {
                    Ok(nu / nv)
                } else {
                    Err(Error::NotDifferentiable { column: j })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut g = v.scale_cols(&ratio)?.scale(self.lambda);
        g.axpy(-1.0, &self.wresid.matmul_tn(u)?)?;
        Ok(g)
    }

    pub(crate) fn grad_u(&self, fp: &FactorPair) -> Result<DenseMatrix> {
        self.grad_u_parts(fp.u(), fp.v())
    }

    pub(crate) fn grad_v(&self, fp: &FactorPair) -> Result<DenseMatrix> {
        self.grad_v_parts(fp.u(), fp.v())
    }
}
