use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CovarianceKind, CovarianceParams, CovarianceSpec, ParameterState};

/// Prior variance used for spline coefficients when none is given.
pub const DEFAULT_COEF_VARIANCE: f64 = 100.0;
/// Inverse gamma `(shape, rate)` used for variances when none is given.
pub const DEFAULT_SIGMA2_PRIOR: InvGammaPrior = InvGammaPrior { shape: 2.0, rate: 0.2 };
/// Correlation level that defines the practical range.
pub const PRACTICAL_RANGE_CORRELATION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    /// Gamma prior with the given mean and variance.
    pub fn from_mean_var(mean: f64, var: f64) -> Self {
        Self {
            shape: mean * mean / var,
            rate: mean / var,
        }
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    /// Log density up to an additive constant.
    pub fn log_kernel(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        (self.shape - 1.0) * x.ln() - self.rate * x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvGammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl InvGammaPrior {
    /// Mean `rate / (shape - 1)`; falls back to the mode when the mean is
    /// infinite.
    pub fn center(&self) -> f64 {
        if self.shape > 1.0 {
            self.rate / (self.shape - 1.0)
        } else {
            self.rate / (self.shape + 1.0)
        }
    }

    pub fn log_kernel(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        -(self.shape + 1.0) * x.ln() - self.rate / x
    }
}

/// Independent priors for every model parameter.
///
/// Spline coefficients get independent normals with per-coefficient means and
/// variances (diagonal covariance). Variances and decays get one prior per
/// scalar: a single entry for the uniformly homogeneous model, one per
/// category otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub beta_mean: DMatrix<f64>,
    pub beta_var: DMatrix<f64>,
    pub sigma2: Vec<InvGammaPrior>,
    pub phi: Vec<GammaPrior>,
    pub theta_mean: Option<DMatrix<f64>>,
    pub theta_var: Option<DMatrix<f64>>,
}

impl PriorSpec {
    /// Default priors: `N(0, 100)` coefficients, `InvGamma(2, 0.2)`
    /// variances and an exponential decay prior whose mean puts the
    /// practical range at half of `range_span`.
    pub fn default_for(spec: &CovarianceSpec, num_coef: usize, range_span: f64) -> Result<Self> {
        let c = spec.num_categories;
        let phi_mean = practical_range_phi_prior(range_span / 2.0, PRACTICAL_RANGE_CORRELATION)?;
        let phi_prior = GammaPrior {
            shape: 1.0,
            rate: 1.0 / phi_mean,
        };
        let n_scalar = match spec.kind {
            CovarianceKind::UniformlyHomogeneous => 1,
            _ => c,
        };
        let (sigma2, theta_mean, theta_var) = match spec.kind {
            CovarianceKind::Heterogeneous => {
                let l = spec.eta_basis.as_ref().map_or(0, |b| b.dim());
                (
                    Vec::new(),
                    Some(DMatrix::zeros(c, l)),
                    Some(DMatrix::from_element(c, l, DEFAULT_COEF_VARIANCE)),
                )
            }
            _ => (vec![DEFAULT_SIGMA2_PRIOR; n_scalar], None, None),
        };
        Ok(Self {
            beta_mean: DMatrix::zeros(c, num_coef),
            beta_var: DMatrix::from_element(c, num_coef, DEFAULT_COEF_VARIANCE),
            sigma2,
            phi: vec![phi_prior; n_scalar],
            theta_mean,
            theta_var,
        })
    }

    pub fn validate(&self, spec: &CovarianceSpec, num_coef: usize) -> Result<()> {
        let c = spec.num_categories;
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.beta_mean.shape() != (c, num_coef) || self.beta_var.shape() != (c, num_coef) {
            return bad(format!("coefficient prior must be {c} x {num_coef}"));
        }
        if self.beta_var.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return bad("coefficient prior variances must be positive".into());
        }
        let n_scalar = match spec.kind {
            CovarianceKind::UniformlyHomogeneous => 1,
            _ => c,
        };
        if self.phi.len() != n_scalar {
            return bad(format!("expected {n_scalar} decay priors"));
        }
        if self.phi.iter().any(|g| !(g.shape > 0.0 && g.rate > 0.0)) {
            return bad("decay prior shape and rate must be positive".into());
        }
        match spec.kind {
            CovarianceKind::Heterogeneous => {
                let l = spec.eta_basis.as_ref().map_or(0, |b| b.dim());
                match (&self.theta_mean, &self.theta_var) {
                    (Some(m), Some(v)) if m.shape() == (c, l) && v.shape() == (c, l) => {
                        if v.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                            return bad("eta coefficient prior variances must be positive".into());
                        }
                    }
                    _ => return bad(format!("eta coefficient prior must be {c} x {l}")),
                }
            }
            _ => {
                if self.sigma2.len() != n_scalar {
                    return bad(format!("expected {n_scalar} variance priors"));
                }
                if self.sigma2.iter().any(|g| !(g.shape > 0.0 && g.rate > 0.0)) {
                    return bad("variance prior shape and rate must be positive".into());
                }
            }
        }
        Ok(())
    }

    /// Log prior density of the covariance parameters, up to a constant.
    pub fn log_cov_prior(&self, params: &CovarianceParams) -> f64 {
        match params {
            CovarianceParams::UniformlyHomogeneous { sigma2, phi } => {
                self.sigma2[0].log_kernel(*sigma2) + self.phi[0].log_kernel(*phi)
            }
            CovarianceParams::Homogeneous { sigma2, phi } => {
                sigma2
                    .iter()
                    .zip(&self.sigma2)
                    .map(|(x, p)| p.log_kernel(*x))
                    .sum::<f64>()
                    + phi.iter().zip(&self.phi).map(|(x, p)| p.log_kernel(*x)).sum::<f64>()
            }
            CovarianceParams::Heterogeneous { theta, phi } => {
                let mut lp: f64 = phi.iter().zip(&self.phi).map(|(x, p)| p.log_kernel(*x)).sum();
                for (c, row) in theta.iter().enumerate() {
                    for (l, &x) in row.iter().enumerate() {
                        lp += self.theta_log_kernel(c, l, x);
                    }
                }
                lp
            }
        }
    }

    pub(crate) fn theta_log_kernel(&self, c: usize, l: usize, x: f64) -> f64 {
        match (&self.theta_mean, &self.theta_var) {
            (Some(m), Some(v)) => {
                let d = x - m[(c, l)];
                -0.5 * d * d / v[(c, l)]
            }
            _ => 0.0,
        }
    }

    /// Log prior density of the spline coefficients, up to a constant.
    pub fn log_beta_prior(&self, beta: &DMatrix<f64>) -> f64 {
        beta.iter()
            .zip(self.beta_mean.iter())
            .zip(self.beta_var.iter())
            .map(|((b, m), v)| -0.5 * (b - m) * (b - m) / v)
            .sum()
    }

    pub fn log_prior(&self, state: &ParameterState) -> f64 {
        self.log_beta_prior(&state.beta) + self.log_cov_prior(&state.cov)
    }
}

/// Decay `phi*` at which the correlation `exp(-phi* dist)` equals
/// `target_corr`.
pub fn practical_range_phi_prior(dist: f64, target_corr: f64) -> Result<f64> {
    if !(dist > 0.0 && dist.is_finite()) {
        return Err(Error::InvalidArgument(format!("distance must be positive, got {dist}")));
    }
    if !(target_corr > 0.0 && target_corr < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target correlation must lie in (0, 1), got {target_corr}"
        )));
    }
    Ok(-target_corr.ln() / dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisSpec;

    #[test]
    fn practical_range() {
        let phi = practical_range_phi_prior(0.75, 0.05).unwrap();
        assert!((phi - 3.9943).abs() < 1e-4);
        // the rounded convention -ln(0.05) ~ 3
        assert_eq!(3.0 / 0.75, 4.0);
        let phi = practical_range_phi_prior(1.0, (-1.0f64).exp()).unwrap();
        assert!((phi - 1.0).abs() < 1e-15);
        assert!(practical_range_phi_prior(1.0, 1.0).is_err());
        assert!(practical_range_phi_prior(1.0, 0.0).is_err());
        assert!(practical_range_phi_prior(0.0, 0.5).is_err());
    }

    #[test]
    fn gamma_from_moments() {
        let g = GammaPrior::from_mean_var(4.0, 1.0);
        assert_eq!(g.shape, 16.0);
        assert_eq!(g.rate, 4.0);
        assert_eq!(g.mean(), 4.0);
    }

    #[test]
    fn defaults_validate() {
        let spec = CovarianceSpec::homogeneous(3);
        let p = PriorSpec::default_for(&spec, 14, 2.0).unwrap();
        p.validate(&spec, 14).unwrap();
        assert_eq!(p.sigma2, vec![DEFAULT_SIGMA2_PRIOR; 3]);
        assert!((p.phi[0].mean() - (-(0.05f64).ln())).abs() < 1e-12);

        let spec = CovarianceSpec::heterogeneous(2, BasisSpec::equally_spaced(10, 0.0, 2.0).unwrap());
        let p = PriorSpec::default_for(&spec, 14, 2.0).unwrap();
        p.validate(&spec, 14).unwrap();
        assert!(p.validate(&spec, 13).is_err());
    }
}
