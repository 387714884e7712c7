//! Posterior predictive distribution of an aggregated curve at new points.
//!
//! For fixed parameters the observed curve and the curve at new points are
//! jointly normal, so the new values are drawn from
//!
//! ```text
//! N(X* beta + Z12' Z^{-1} (y - X beta),  Z* - Z12' Z^{-1} Z12)
//! ```
//!
//! and the posterior predictive is approximated by one such draw per
//! posterior sample. With `J` replicates the target is the replicate
//! average, whose covariance is `Z / J`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::linalg::{Factor, JITTER_LEVELS};
use crate::model::{cross_covariance, mean_vector, AggregatedDataset, CovarianceSpec, ParameterState};
use crate::seed::derive_seed;
use crate::summary::quantile_type7;

/// One observed curve to condition on.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedCurve {
    pub grid: Vec<f64>,
    /// Replicate-averaged values on `grid`.
    pub y: DVector<f64>,
    pub r_row: Vec<f64>,
    pub c_row: Vec<f64>,
    /// Number of replicates averaged into `y`; at least 1.
    pub replicates: usize,
}

impl ObservedCurve {
    pub fn from_dataset(data: &AggregatedDataset, curve: usize) -> Result<Self> {
        if curve >= data.num_curves() {
            return Err(Error::InvalidArgument(format!(
                "curve {curve} out of range (I = {})",
                data.num_curves()
            )));
        }
        Ok(Self {
            grid: data.grid.clone(),
            y: data.replicate_mean(curve),
            r_row: data.r_row(curve),
            c_row: data.c_row(curve),
            replicates: data.num_replicates().max(1),
        })
    }
}

/// Gaussian for the new values given one parameter state.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalPredictive {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Conditions curve `obs` on its observed values and returns the Gaussian of
/// the (replicate-averaged) curve at `new_grid`. The observed covariance is
/// jittered only if a plain Cholesky factorization fails.
pub fn conditional_predictive(
    state: &ParameterState,
    basis: &BasisSpec,
    cov_spec: &CovarianceSpec,
    obs: &ObservedCurve,
    new_grid: &[f64],
) -> Result<ConditionalPredictive> {
    if obs.y.len() != obs.grid.len() {
        return Err(Error::DimensionMismatch {
            what: "observed values",
            expected: obs.grid.len(),
            got: obs.y.len(),
        });
    }
    let scale = 1.0 / obs.replicates.max(1) as f64;
    let mu_new = mean_vector(&state.beta, basis, &obs.r_row, new_grid)?;
    let z_new = cross_covariance(cov_spec, &state.cov, &obs.c_row, new_grid, new_grid)? * scale;
    if obs.grid.is_empty() {
        return Ok(ConditionalPredictive {
            mean: mu_new,
            covariance: z_new,
        });
    }
    let mu_obs = mean_vector(&state.beta, basis, &obs.r_row, &obs.grid)?;
    let z = cross_covariance(cov_spec, &state.cov, &obs.c_row, &obs.grid, &obs.grid)? * scale;
    let z12 = cross_covariance(cov_spec, &state.cov, &obs.c_row, &obs.grid, new_grid)? * scale;
    let f = Factor::exact_or_jittered(&z).ok_or(Error::Factorization { curve: None })?;
    let w12 = f.whiten(&z12);
    let wres = f.whiten_vec(&(&obs.y - mu_obs));
    let mean = mu_new + w12.tr_mul(&wres);
    let cov = z_new - w12.tr_mul(&w12);
    let covariance = (&cov + cov.transpose()) * 0.5;
    Ok(ConditionalPredictive { mean, covariance })
}

/// Draws `mean + L z` with `covariance = L L'`. The factor gets a small
/// diagonal jitter relative to the covariance diagonal when needed and
/// falls back to a clipped eigendecomposition.
pub fn sample_gaussian<R: Rng + ?Sized>(rng: &mut R, mean: &DVector<f64>, covariance: &DMatrix<f64>) -> DVector<f64> {
    let n = mean.len();
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    if n == 0 {
        return mean.clone();
    }
    let scale = covariance.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if scale == 0.0 {
        return mean.clone();
    }
    if let Some(chol) = covariance.clone().cholesky() {
        return mean + chol.l() * z;
    }
    for eps in JITTER_LEVELS {
        let mut a = covariance.clone();
        for i in 0..n {
            a[(i, i)] += eps * scale;
        }
        if let Some(chol) = a.cholesky() {
            return mean + chol.l() * z;
        }
    }
    let eig = SymmetricEigen::new(covariance.clone());
    let root = DVector::from_iterator(n, eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()));
    mean + &eig.eigenvectors * z.component_mul(&root)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveRequest {
    /// Index of the curve to predict, 0-based.
    pub curve: usize,
    pub new_grid: Vec<f64>,
    /// Draw from the full conditional Gaussian; when false each posterior
    /// sample contributes only its conditional mean.
    #[serde(default = "default_true")]
    pub include_noise: bool,
}

fn default_true() -> bool {
    true
}

/// Predictive draws (`Q x L*`, one row per posterior sample) with pointwise
/// summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveOutput {
    pub grid: Vec<f64>,
    pub samples: DMatrix<f64>,
    pub mean: Vec<f64>,
    pub q025: Vec<f64>,
    pub q975: Vec<f64>,
}

/// One predictive draw per posterior sample. Sample `q` uses its own
/// stream derived from `seed`, so results do not depend on thread count.
pub fn predictive_draws(
    request: &PredictiveRequest,
    draws: &[ParameterState],
    data: &AggregatedDataset,
    basis: &BasisSpec,
    cov_spec: &CovarianceSpec,
    seed: u64,
) -> Result<PredictiveOutput> {
    if draws.is_empty() {
        return Err(Error::InvalidArgument("no posterior draws to predict from".into()));
    }
    if let Some(&t) = request.new_grid.iter().find(|&&t| !basis.contains(t)) {
        let (lo, hi) = basis.domain();
        return Err(Error::OutsideDomain { t, lo, hi });
    }
    let obs = ObservedCurve::from_dataset(data, request.curve)?;
    let rows: Vec<DVector<f64>> = draws
        .par_iter()
        .enumerate()
        .map(|(q, state)| {
            let cond = conditional_predictive(state, basis, cov_spec, &obs, &request.new_grid)?;
            if request.include_noise {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, q as u64));
                Ok(sample_gaussian(&mut rng, &cond.mean, &cond.covariance))
            } else {
                Ok(cond.mean)
            }
        })
        .collect::<Result<_>>()?;
    let l = request.new_grid.len();
    let samples = DMatrix::from_fn(rows.len(), l, |q, k| rows[q][k]);
    let mut mean = Vec::with_capacity(l);
    let mut q025 = Vec::with_capacity(l);
    let mut q975 = Vec::with_capacity(l);
    for k in 0..l {
        let mut col: Vec<f64> = samples.column(k).iter().copied().collect();
        mean.push(col.iter().sum::<f64>() / col.len() as f64);
        col.sort_by(f64::total_cmp);
        q025.push(quantile_type7(&col, 0.025));
        q975.push(quantile_type7(&col, 0.975));
    }
    Ok(PredictiveOutput {
        grid: request.new_grid.clone(),
        samples,
        mean,
        q025,
        q975,
    })
}
