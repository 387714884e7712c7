//! Normal full conditional of the stacked mean-curve coefficients.
//!
//! With prior `beta ~ N(b, Omega)` and `y_ij ~ N(X_i beta, Z_i)`:
//!
//! ```text
//! precision = Omega^{-1} + sum_ij X_i' Z_i^{-1} X_i
//! mean      = precision^{-1} (Omega^{-1} b + sum_ij X_i' Z_i^{-1} y_ij)
//! ```
//!
//! `X_i = r_i (x) B` is a Kronecker product, so only the `K x K` blocks
//! `B' Z_i^{-1} B` are formed.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use super::likelihood::{Context, CovState, Factors};
use super::prior::PriorSpec;
use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::model::{AggregatedDataset, CovarianceParams, CovarianceSpec, ParameterState};

/// Normal full conditional of `vec(beta)` (category-major).
#[derive(Debug, Clone)]
pub struct BetaConditional {
    pub mean: DVector<f64>,
    precision: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl BetaConditional {
    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// `mean + L^{-T} z` with `precision = L L'` and `z ~ N(0, I)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let n = self.mean.len();
        let mut z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        self.chol.l_dirty().tr_solve_lower_triangular_unchecked_mut(&mut z);
        &self.mean + z
    }
}

pub(crate) fn conditional_from(
    ctx: &Context<'_>,
    factors: &Factors,
    prior: &PriorSpec,
) -> Result<BetaConditional> {
    let c = prior.beta_mean.nrows();
    let k = prior.beta_mean.ncols();
    let n = c * k;
    let j = ctx.data.num_replicates() as f64;

    let mut precision = DMatrix::zeros(n, n);
    let mut h = DVector::zeros(n);
    for cc in 0..c {
        for kk in 0..k {
            let v = prior.beta_var[(cc, kk)];
            precision[(cc * k + kk, cc * k + kk)] = 1.0 / v;
            h[cc * k + kk] = prior.beta_mean[(cc, kk)] / v;
        }
    }

    let mut add_curve = |i: usize, gram: &DMatrix<f64>, cross: &DVector<f64>| {
        let r = ctx.data.r.row(i);
        for a in 0..c {
            let ra = r[a];
            if ra == 0.0 {
                continue;
            }
            h.rows_mut(a * k, k).axpy(ra, cross, 1.0);
            for b in 0..c {
                let w = j * ra * r[b];
                if w != 0.0 {
                    precision.view_mut((a * k, b * k), (k, k)).zip_apply(gram, |p, g| *p += w * g);
                }
            }
        }
    };

    match factors {
        Factors::Shared { base, scale } => {
            if ctx.num_curves() > 0 {
                let wb = base.whiten(&ctx.b);
                let gram = wb.tr_mul(&wb);
                let ys = DMatrix::from_columns(&ctx.y_sum);
                let wy = base.whiten(&ys);
                let cross_all = wb.tr_mul(&wy);
                for (i, s) in scale.iter().enumerate() {
                    let g = &gram / *s;
                    let x = cross_all.column(i) / *s;
                    add_curve(i, &g, &x);
                }
            }
        }
        Factors::PerCurve(fs) => {
            for (i, f) in fs.iter().enumerate() {
                let wb = f.whiten(&ctx.b);
                let gram = wb.tr_mul(&wb);
                let wy = f.whiten_vec(&ctx.y_sum[i]);
                let cross = wb.tr_mul(&wy);
                add_curve(i, &gram, &cross);
            }
        }
    }

    // symmetric by construction up to the order of accumulation
    let precision = (&precision + precision.transpose()) * 0.5;
    let chol = Cholesky::new(precision.clone()).ok_or(Error::Factorization { curve: None })?;
    let mean = chol.solve(&h);
    Ok(BetaConditional {
        mean,
        precision,
        chol,
    })
}

/// Full conditional of the mean coefficients given the covariance
/// parameters.
pub fn beta_full_conditional(
    data: &AggregatedDataset,
    basis: &BasisSpec,
    cov_spec: &CovarianceSpec,
    cov_params: &CovarianceParams,
    prior: &PriorSpec,
) -> Result<BetaConditional> {
    cov_spec.check_params(cov_params)?;
    prior.validate(cov_spec, basis.dim())?;
    let ctx = Context::new(data, basis, cov_spec)?;
    let cov = CovState::new(&ctx, cov_params)?;
    conditional_from(&ctx, &cov.factors, prior)
}

/// Gibbs step: draws new coefficients from their full conditional and
/// leaves the covariance parameters untouched.
pub fn gibbs_update_beta<R: Rng + ?Sized>(
    rng: &mut R,
    state: &ParameterState,
    data: &AggregatedDataset,
    basis: &BasisSpec,
    cov_spec: &CovarianceSpec,
    prior: &PriorSpec,
) -> Result<ParameterState> {
    let cond = beta_full_conditional(data, basis, cov_spec, &state.cov, prior)?;
    let mut next = state.clone();
    next.set_beta_vec(&cond.sample(rng));
    Ok(next)
}
