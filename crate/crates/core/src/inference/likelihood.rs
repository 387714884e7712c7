//! Gaussian log-likelihood of the aggregated curves.
//!
//! Every replicate of curve `i` shares the covariance `Z_i`, so `Z_i` is
//! factorized once per curve and the residuals of all replicates are
//! whitened together. In the uniformly homogeneous model every `Z_i` is a
//! multiple of one correlation matrix and a single factorization is shared
//! by all curves.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::linalg::{compress_columns, Factor};
use crate::model::{
    mean_from_basis_matrix, AggregatedDataset, CovarianceParams, CovarianceSpec, ParameterState,
};

/// Quantities that depend only on the data and the bases.
pub(crate) struct Context<'a> {
    pub data: &'a AggregatedDataset,
    pub spec: &'a CovarianceSpec,
    /// Mean basis on the data grid, `T x K`.
    pub b: DMatrix<f64>,
    /// Eta basis on the data grid, `T x L`.
    pub b_eta: Option<DMatrix<f64>>,
    /// `|t_a - t_b|`.
    pub dist: DMatrix<f64>,
    /// Replicate sums per curve.
    pub y_sum: Vec<DVector<f64>>,
    /// Sum of the covariance weights per curve.
    pub c_total: Vec<f64>,
}

impl<'a> Context<'a> {
    pub fn new(data: &'a AggregatedDataset, basis: &BasisSpec, spec: &'a CovarianceSpec) -> Result<Self> {
        let grid = &data.grid;
        let b = basis.matrix(grid)?;
        let b_eta = match &spec.eta_basis {
            Some(eb) => Some(eb.matrix(grid)?),
            None => None,
        };
        let n = grid.len();
        let dist = DMatrix::from_fn(n, n, |a, c| (grid[a] - grid[c]).abs());
        let y_sum = data.y.iter().map(|y| y.column_sum()).collect();
        let c_total = (0..data.num_curves())
            .map(|i| data.c_weights.row(i).sum())
            .collect();
        Ok(Self {
            data,
            spec,
            b,
            b_eta,
            dist,
            y_sum,
            c_total,
        })
    }

    pub fn num_curves(&self) -> usize {
        self.data.num_curves()
    }

    pub fn grid_len(&self) -> usize {
        self.data.grid_len()
    }

    pub fn correlation(&self, phi: f64) -> DMatrix<f64> {
        self.dist.map(|d| (-phi * d).exp())
    }

    /// Standard-deviation curve of category `c` on the data grid.
    pub fn eta(&self, params: &CovarianceParams, c: usize) -> DVector<f64> {
        let n = self.grid_len();
        match params {
            CovarianceParams::UniformlyHomogeneous { sigma2, .. } => {
                DVector::from_element(n, sigma2.sqrt())
            }
            CovarianceParams::Homogeneous { sigma2, .. } => DVector::from_element(n, sigma2[c].sqrt()),
            CovarianceParams::Heterogeneous { theta, .. } => {
                let b_eta = self.b_eta.as_ref().expect("eta basis present for heterogeneous model");
                b_eta * DVector::from_column_slice(&theta[c])
            }
        }
    }

    /// Residual matrices `y_ij - mu_i` for every curve, compressed to at
    /// most `T` columns.
    pub fn residuals(&self, beta: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        (0..self.num_curves())
            .map(|i| {
                let mu = mean_from_basis_matrix(beta, &self.b, &self.data.r_row(i));
                let mut e = self.data.y[i].clone();
                for mut col in e.column_iter_mut() {
                    col -= &mu;
                }
                compress_columns(e)
            })
            .collect()
    }
}

/// Factorizations of every `Z_i`.
#[derive(Debug, Clone)]
pub(crate) enum Factors {
    /// `Z_i = scale_i * R` with one factor of `R`.
    Shared { base: Factor, scale: Vec<f64> },
    PerCurve(Vec<Factor>),
}

impl Factors {
    pub fn log_det(&self, i: usize) -> f64 {
        match self {
            Factors::Shared { base, scale } => base.dim() as f64 * scale[i].ln() + base.log_det(),
            Factors::PerCurve(f) => f[i].log_det(),
        }
    }

    pub fn quad_sum(&self, i: usize, b: &DMatrix<f64>) -> f64 {
        match self {
            Factors::Shared { base, scale } => base.quad_sum(b) / scale[i],
            Factors::PerCurve(f) => f[i].quad_sum(b),
        }
    }
}

/// Covariance building blocks for one parameter value.
#[derive(Debug, Clone)]
pub(crate) struct CovState {
    /// Correlation matrix per category (a single one when shared).
    pub corr: Vec<DMatrix<f64>>,
    /// `(eta_c eta_c') o corr_c` per category; empty for the shared model.
    pub parts: Vec<DMatrix<f64>>,
    pub factors: Factors,
}

impl CovState {
    pub fn new(ctx: &Context<'_>, params: &CovarianceParams) -> Result<Self> {
        match params {
            CovarianceParams::UniformlyHomogeneous { sigma2, phi } => {
                let r = ctx.correlation(*phi);
                let factors = shared_factors(ctx, &r, *sigma2)?;
                Ok(Self {
                    corr: vec![r],
                    parts: Vec::new(),
                    factors,
                })
            }
            _ => {
                let c = ctx.spec.num_categories;
                let corr: Vec<_> = (0..c).map(|cc| ctx.correlation(params.phi(cc))).collect();
                let parts: Vec<_> = (0..c)
                    .map(|cc| part(&ctx.eta(params, cc), &corr[cc]))
                    .collect();
                let factors = per_curve_factors(ctx, &parts)?;
                Ok(Self { corr, parts, factors })
            }
        }
    }

    /// State after changing the parameters of category `c` only. For the
    /// shared model `c` is ignored and everything is rebuilt.
    pub fn update_category(
        &self,
        ctx: &Context<'_>,
        params: &CovarianceParams,
        c: usize,
        phi_changed: bool,
    ) -> Result<Self> {
        match params {
            CovarianceParams::UniformlyHomogeneous { sigma2, .. } => {
                if phi_changed {
                    return Self::new(ctx, params);
                }
                let r = self.corr[0].clone();
                let factors = match &self.factors {
                    Factors::Shared { base, .. } => Factors::Shared {
                        base: base.clone(),
                        scale: shared_scales(ctx, *sigma2)?,
                    },
                    Factors::PerCurve(_) => shared_factors(ctx, &r, *sigma2)?,
                };
                Ok(Self {
                    corr: vec![r],
                    parts: Vec::new(),
                    factors,
                })
            }
            _ => {
                let mut corr = self.corr.clone();
                if phi_changed {
                    corr[c] = ctx.correlation(params.phi(c));
                }
                let mut parts = self.parts.clone();
                parts[c] = part(&ctx.eta(params, c), &corr[c]);
                let factors = per_curve_factors(ctx, &parts)?;
                Ok(Self { corr, parts, factors })
            }
        }
    }
}

fn part(eta: &DVector<f64>, corr: &DMatrix<f64>) -> DMatrix<f64> {
    let n = eta.len();
    DMatrix::from_fn(n, n, |a, b| (eta[a] * eta[b]) * corr[(a, b)])
}

fn shared_scales(ctx: &Context<'_>, sigma2: f64) -> Result<Vec<f64>> {
    ctx.c_total
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let s = w * sigma2;
            if s > 0.0 && s.is_finite() {
                Ok(s)
            } else {
                Err(Error::Factorization { curve: Some(i) })
            }
        })
        .collect()
}

fn shared_factors(ctx: &Context<'_>, r: &DMatrix<f64>, sigma2: f64) -> Result<Factors> {
    let scale = shared_scales(ctx, sigma2)?;
    let base = Factor::new(r).ok_or(Error::Factorization { curve: None })?;
    Ok(Factors::Shared { base, scale })
}

fn per_curve_factors(ctx: &Context<'_>, parts: &[DMatrix<f64>]) -> Result<Factors> {
    let n = ctx.grid_len();
    let mut out = Vec::with_capacity(ctx.num_curves());
    for i in 0..ctx.num_curves() {
        let mut z = DMatrix::zeros(n, n);
        for (c, p) in parts.iter().enumerate() {
            let w = ctx.data.c_weights[(i, c)];
            if w != 0.0 {
                z.zip_apply(p, |a, b| *a += w * b);
            }
        }
        out.push(Factor::new(&z).ok_or(Error::Factorization { curve: Some(i) })?);
    }
    Ok(Factors::PerCurve(out))
}

/// Log-likelihood from cached factors and residuals.
pub(crate) fn log_lik_from(ctx: &Context<'_>, factors: &Factors, residuals: &[DMatrix<f64>]) -> f64 {
    let t = ctx.grid_len() as f64;
    let j = ctx.data.num_replicates() as f64;
    let mut ll = 0.0;
    for (i, e) in residuals.iter().enumerate() {
        ll += -0.5 * j * t * (2.0 * PI).ln() - 0.5 * j * factors.log_det(i) - 0.5 * factors.quad_sum(i, e);
    }
    ll
}

/// `sum_i sum_j log N_T(y_ij | X_i beta, Z_i)`.
pub fn log_likelihood(
    state: &ParameterState,
    data: &AggregatedDataset,
    basis: &BasisSpec,
    cov_spec: &CovarianceSpec,
) -> Result<f64> {
    cov_spec.check_params(&state.cov)?;
    if state.beta.shape() != (cov_spec.num_categories, basis.dim()) {
        return Err(Error::DimensionMismatch {
            what: "beta",
            expected: cov_spec.num_categories * basis.dim(),
            got: state.beta.len(),
        });
    }
    let ctx = Context::new(data, basis, cov_spec)?;
    let cov = CovState::new(&ctx, &state.cov)?;
    let res = ctx.residuals(&state.beta);
    Ok(log_lik_from(&ctx, &cov.factors, &res))
}
