//! Synthetic aggregated curves with known truth, including the preset
//! two-category scenarios used for recovery checks.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::inference::McmcConfig;
use crate::linalg::Factor;
use crate::model::{covariance_matrix, eta_curve, AggregatedDataset, CovarianceParams, CovarianceSpec};
use crate::seed::derive_seed;
use crate::summary::linspace;

/// First reference mean curve: `5 exp(-t) sin(pi t / 2) cos(pi t)`.
pub fn true_alpha1(t: f64) -> f64 {
    5.0 * (-t).exp() * (PI * t / 2.0).sin() * (PI * t).cos()
}

/// Second reference mean curve: `5 exp(-(t - 0.2)) cos(pi t / 2) sin(pi t)`.
pub fn true_alpha2(t: f64) -> f64 {
    5.0 * (-(t - 0.2)).exp() * (PI * t / 2.0).cos() * (PI * t).sin()
}

/// True category mean curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AlphaTruth {
    /// The two closed-form reference curves.
    Reference,
    /// Spline curves; `coefficients[c]` expands category `c`.
    Spline {
        basis: BasisSpec,
        coefficients: Vec<Vec<f64>>,
    },
}

impl AlphaTruth {
    pub fn num_categories(&self) -> usize {
        match self {
            AlphaTruth::Reference => 2,
            AlphaTruth::Spline { coefficients, .. } => coefficients.len(),
        }
    }

    pub fn values(&self, c: usize, grid: &[f64]) -> Result<Vec<f64>> {
        match self {
            AlphaTruth::Reference => match c {
                0 => Ok(grid.iter().map(|&t| true_alpha1(t)).collect()),
                1 => Ok(grid.iter().map(|&t| true_alpha2(t)).collect()),
                _ => Err(Error::InvalidArgument(format!("reference truth has 2 categories, got index {c}"))),
            },
            AlphaTruth::Spline { basis, coefficients } => {
                let coef = coefficients
                    .get(c)
                    .ok_or_else(|| Error::InvalidArgument(format!("no truth for category {c}")))?;
                basis.curve_values(coef, grid)
            }
        }
    }
}

/// A data-generating setup: truth, design and covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    pub name: String,
    pub alpha: AlphaTruth,
    pub grid: Vec<f64>,
    /// Replicates per curve.
    pub replicates: usize,
    /// Mean weights, one row per curve.
    pub r: Vec<Vec<f64>>,
    /// Covariance weights, one row per curve.
    pub c_weights: Vec<Vec<f64>>,
    pub cov_spec: CovarianceSpec,
    pub cov_params: CovarianceParams,
}

fn to_matrix(rows: &[Vec<f64>], cols: usize, what: &'static str) -> Result<DMatrix<f64>> {
    if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
        return Err(Error::DimensionMismatch {
            what,
            expected: cols,
            got: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, c| rows[i][c]))
}

impl SimulationScenario {
    pub fn num_curves(&self) -> usize {
        self.r.len()
    }

    pub fn num_categories(&self) -> usize {
        self.cov_spec.num_categories
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.num_categories();
        if self.alpha.num_categories() != c {
            return Err(Error::DimensionMismatch {
                what: "true mean curves",
                expected: c,
                got: self.alpha.num_categories(),
            });
        }
        if self.c_weights.len() != self.r.len() {
            return Err(Error::DimensionMismatch {
                what: "covariance weight rows",
                expected: self.r.len(),
                got: self.c_weights.len(),
            });
        }
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be positive".into()));
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("grid must be strictly increasing".into()));
        }
        to_matrix(&self.r, c, "mean weights")?;
        to_matrix(&self.c_weights, c, "covariance weights")?;
        self.cov_spec.check_params(&self.cov_params)
    }

    /// `sum_c r_ic alpha_c` on the scenario grid.
    pub fn noiseless(&self, i: usize) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.grid.len());
        for (c, &w) in self.r[i].iter().enumerate() {
            out += DVector::from_vec(self.alpha.values(c, &self.grid)?) * w;
        }
        Ok(out)
    }

    pub fn eta_values(&self, c: usize, grid: &[f64]) -> Result<Vec<f64>> {
        eta_curve(&self.cov_spec, &self.cov_params, c, grid)
    }
}

/// Draws one dataset. Curve `i` uses its own stream derived from `seed`, so
/// changing the seed changes only the noise.
pub fn generate(scenario: &SimulationScenario, seed: u64) -> Result<AggregatedDataset> {
    scenario.validate()?;
    let c = scenario.num_categories();
    let t = scenario.grid.len();
    let j = scenario.replicates;
    let y = (0..scenario.num_curves())
        .into_par_iter()
        .map(|i| {
            let mean = scenario.noiseless(i)?;
            let z = covariance_matrix(&scenario.cov_spec, &scenario.cov_params, &scenario.c_weights[i], &scenario.grid)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            let noise = if z.diagonal().iter().all(|&d| d == 0.0) {
                DMatrix::zeros(t, j)
            } else {
                let f = Factor::new(&z).ok_or(Error::Factorization { curve: Some(i) })?;
                let e = DMatrix::from_fn(t, j, |_, _| rng.sample::<f64, _>(StandardNormal));
                f.lower() * e
            };
            let mut y = noise;
            for mut col in y.column_iter_mut() {
                col += &mean;
            }
            Ok(y)
        })
        .collect::<Result<Vec<_>>>()?;
    let r = to_matrix(&scenario.r, c, "mean weights")?;
    let cw = to_matrix(&scenario.c_weights, c, "covariance weights")?;
    Ok(AggregatedDataset::new(scenario.grid.clone(), y, r, Some(cw)))
}

/// Model settings used to fit a preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub basis: BasisSpec,
    pub cov_spec: CovarianceSpec,
    pub mcmc: McmcConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub scenario: SimulationScenario,
    pub fit: FitSettings,
}

/// Grid used by all presets: 50 equally spaced points on `[0, 2]`.
pub fn preset_grid() -> Vec<f64> {
    linspace(0.0, 2.0, 50)
}

/// Basis used by all presets: 10 equally spaced interior knots on `[0, 2]`.
pub fn preset_basis() -> BasisSpec {
    BasisSpec::equally_spaced(10, 0.0, 2.0).expect("valid preset basis")
}

const BASE_WEIGHTS: [[f64; 2]; 3] = [[1.0, 4.0], [4.0, 1.0], [2.5, 2.5]];
const CASE2_COV_WEIGHTS: [[f64; 2]; 3] = [[1.0, 1.3], [1.4, 1.3], [1.5, 1.5]];

/// Eta-curve coefficients for the heterogeneous presets, fixed draws from
/// `U(0.5, 1.5)`.
pub const CASE3_ETA_COEFFICIENTS: [[f64; 14]; 2] = [
    [
        0.6180, 0.9202, 1.2850, 1.0841, 1.3530, 0.9240, 0.7021, 0.9345, 0.8780, 0.5767, 1.4751, 1.3928, 1.3261,
        1.0693,
    ],
    [
        0.8365, 0.6282, 1.3815, 1.0871, 0.6265, 1.4480, 1.4016, 1.0870, 1.0543, 1.3782, 1.1536, 0.8696, 0.5460,
        1.4974,
    ],
];

/// Seed of the extra mean-weight rows beyond the base three.
const EXTRA_WEIGHTS_SEED: u64 = 20_240_601;

/// The base weight rows followed by fixed `U[1, 4]` draws up to `n` rows.
/// Shorter presets get a prefix of the longer ones.
fn extended_weights(n: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(EXTRA_WEIGHTS_SEED);
    (0..n)
        .map(|i| match BASE_WEIGHTS.get(i) {
            Some(row) => row.to_vec(),
            None => (0..2).map(|_| rng.random_range(1.0..=4.0)).collect(),
        })
        .collect()
}

fn acceptance_mcmc() -> McmcConfig {
    McmcConfig {
        n_iter: 20_000,
        burn_in: 2_000,
        thin: 18,
        ..McmcConfig::default()
    }
}

fn case1(curves: usize) -> Preset {
    let spec = CovarianceSpec::uniformly_homogeneous(2);
    Preset {
        scenario: SimulationScenario {
            name: format!("case1_I{curves}"),
            alpha: AlphaTruth::Reference,
            grid: preset_grid(),
            replicates: 1,
            r: extended_weights(curves),
            c_weights: vec![vec![1.0, 1.0]; curves],
            cov_spec: spec.clone(),
            cov_params: CovarianceParams::UniformlyHomogeneous { sigma2: 1.0, phi: 0.5 },
        },
        fit: FitSettings {
            basis: preset_basis(),
            cov_spec: spec,
            mcmc: acceptance_mcmc(),
        },
    }
}

fn case2() -> Preset {
    let spec = CovarianceSpec::homogeneous(2);
    Preset {
        scenario: SimulationScenario {
            name: "case2_J15".into(),
            alpha: AlphaTruth::Reference,
            grid: preset_grid(),
            replicates: 15,
            r: extended_weights(3),
            c_weights: CASE2_COV_WEIGHTS.iter().map(|r| r.to_vec()).collect(),
            cov_spec: spec.clone(),
            cov_params: CovarianceParams::Homogeneous {
                sigma2: vec![1.0, 1.0],
                phi: vec![4.0, 4.0],
            },
        },
        fit: FitSettings {
            basis: preset_basis(),
            cov_spec: spec,
            mcmc: acceptance_mcmc(),
        },
    }
}

fn case3(replicates: usize) -> Preset {
    let spec = CovarianceSpec::heterogeneous(2, preset_basis());
    Preset {
        scenario: SimulationScenario {
            name: format!("case3_J{replicates}"),
            alpha: AlphaTruth::Reference,
            grid: preset_grid(),
            replicates,
            r: extended_weights(3),
            c_weights: CASE2_COV_WEIGHTS.iter().map(|r| r.to_vec()).collect(),
            cov_spec: spec.clone(),
            cov_params: CovarianceParams::Heterogeneous {
                theta: CASE3_ETA_COEFFICIENTS.iter().map(|r| r.to_vec()).collect(),
                phi: vec![4.0, 4.0],
            },
        },
        fit: FitSettings {
            basis: preset_basis(),
            cov_spec: spec,
            mcmc: acceptance_mcmc(),
        },
    }
}

/// Named preset scenarios with their fitting settings.
pub fn scenario_presets() -> Vec<Preset> {
    vec![case1(10), case1(30), case2(), case3(15), case3(50), case3(150)]
}

pub fn preset(name: &str) -> Result<Preset> {
    scenario_presets()
        .into_iter()
        .find(|p| p.scenario.name == name)
        .ok_or_else(|| {
            let names: Vec<String> = scenario_presets().into_iter().map(|p| p.scenario.name).collect();
            Error::Config(format!("unknown preset {name:?}; known: {}", names.join(", ")))
        })
}
