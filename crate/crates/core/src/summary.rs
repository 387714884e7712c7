//! Pointwise posterior summaries of the category mean curves and standard
//! deviation curves.

use serde::Serialize;

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::inference::ChainOutput;
use crate::model::{eta_curve, CovarianceSpec, ParameterState};

/// Points in the default summary grid.
pub const DEFAULT_SUMMARY_POINTS: usize = 200;

/// Sample quantile with linear interpolation between order statistics
/// (`h = (n - 1) p`). `sorted` must be ascending and nonempty.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `n` equally spaced points spanning `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| if k == n - 1 { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
            .collect(),
    }
}

/// Summary grid spanning a basis domain.
pub fn default_summary_grid(basis: &BasisSpec) -> Vec<f64> {
    let (lo, hi) = basis.domain();
    linspace(lo, hi, DEFAULT_SUMMARY_POINTS)
}

/// Retained draws of all chains in chain order.
pub fn pooled_draws(chains: &[ChainOutput]) -> Vec<ParameterState> {
    chains.iter().flat_map(|c| c.draws.iter().cloned()).collect()
}

/// Pointwise posterior mean and central 95% band of one curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveBand {
    /// Category index, 0-based.
    pub category: usize,
    pub grid: Vec<f64>,
    pub post_mean: Vec<f64>,
    pub q025: Vec<f64>,
    pub q975: Vec<f64>,
}

impl CurveBand {
    pub fn widths(&self) -> Vec<f64> {
        self.q975.iter().zip(&self.q025).map(|(u, l)| u - l).collect()
    }
}

fn band(category: usize, grid: &[f64], curves: &[Vec<f64>]) -> CurveBand {
    let n = curves.len() as f64;
    let mut post_mean = Vec::with_capacity(grid.len());
    let mut q025 = Vec::with_capacity(grid.len());
    let mut q975 = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let mut col: Vec<f64> = curves.iter().map(|c| c[k]).collect();
        post_mean.push(col.iter().sum::<f64>() / n);
        col.sort_by(f64::total_cmp);
        q025.push(quantile_type7(&col, 0.025));
        q975.push(quantile_type7(&col, 0.975));
    }
    CurveBand {
        category,
        grid: grid.to_vec(),
        post_mean,
        q025,
        q975,
    }
}

fn check_nonempty(draws: &[ParameterState]) -> Result<()> {
    if draws.is_empty() {
        return Err(Error::InvalidArgument("no posterior draws to summarize".into()));
    }
    Ok(())
}

/// Bands for every mean curve `alpha_c` on `grid`.
pub fn summarize_alpha(draws: &[ParameterState], basis: &BasisSpec, grid: &[f64]) -> Result<Vec<CurveBand>> {
    check_nonempty(draws)?;
    let b = basis.matrix(grid)?;
    let num_categories = draws[0].beta.nrows();
    (0..num_categories)
        .map(|c| {
            let curves: Vec<Vec<f64>> = draws
                .iter()
                .map(|d| (&b * d.beta.row(c).transpose()).iter().copied().collect())
                .collect();
            Ok(band(c, grid, &curves))
        })
        .collect()
}

/// Standard-deviation curve of category `c` for one draw with its sign
/// fixed so that the curve has a nonnegative average over `grid`. The
/// likelihood depends on `eta_c` only through `eta_c(t) eta_c(s)`.
pub fn canonical_eta(spec: &CovarianceSpec, state: &ParameterState, c: usize, grid: &[f64]) -> Result<Vec<f64>> {
    let mut eta = eta_curve(spec, &state.cov, c, grid)?;
    if eta.iter().sum::<f64>() < 0.0 {
        eta.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(eta)
}

/// Bands for every standard-deviation curve `eta_c` on `grid`.
pub fn summarize_eta(draws: &[ParameterState], spec: &CovarianceSpec, grid: &[f64]) -> Result<Vec<CurveBand>> {
    check_nonempty(draws)?;
    (0..spec.num_categories)
        .map(|c| {
            let curves = draws
                .iter()
                .map(|d| canonical_eta(spec, d, c, grid))
                .collect::<Result<Vec<_>>>()?;
            Ok(band(c, grid, &curves))
        })
        .collect()
}

/// Relative L2 distance `||a - b|| / ||b||` between two curves on a common
/// grid.
pub fn relative_l2(estimate: &[f64], truth: &[f64]) -> f64 {
    let num: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = truth.iter().map(|b| b * b).sum();
    (num / den).sqrt()
}
