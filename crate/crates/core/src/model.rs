//! Observation model: aggregated curves, mean structure and the three
//! covariance structures for the measurement error process.
//!
//! Curve `i`, replicate `j` is observed on a common grid as
//!
//! ```text
//! y_ij(t) = sum_c r_ic alpha_c(t) + eps_ij(t)
//! Cov(eps_ij(t), eps_ij(s)) = sum_c C_ic eta_c(t) eta_c(s) exp(-phi_c |t - s|)
//! ```
//!
//! where `alpha_c` are cubic spline curves and `eta_c` is a constant shared
//! standard deviation, a per-category constant, or a spline curve.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result, Violation};
use crate::linalg::numerical_rank;

/// Singular values of `r` below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Aggregated functional observations on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedDataset {
    pub grid: Vec<f64>,
    /// One `T x J` matrix per curve; column `j` is replicate `j`.
    pub y: Vec<DMatrix<f64>>,
    /// Mean aggregation weights, `I x C`.
    pub r: DMatrix<f64>,
    /// Covariance weights, `I x C`.
    pub c_weights: DMatrix<f64>,
    pub curve_ids: Vec<String>,
    pub labels: Vec<String>,
}

impl AggregatedDataset {
    /// Builds a dataset with default curve ids `1..=I` and category labels
    /// `1..=C`. When `c_weights` is `None` the mean weights are reused.
    pub fn new(
        grid: Vec<f64>,
        y: Vec<DMatrix<f64>>,
        r: DMatrix<f64>,
        c_weights: Option<DMatrix<f64>>,
    ) -> Self {
        let c_weights = c_weights.unwrap_or_else(|| r.clone());
        let curve_ids = (1..=y.len()).map(|i| i.to_string()).collect();
        let labels = (1..=r.ncols()).map(|c| c.to_string()).collect();
        Self {
            grid,
            y,
            r,
            c_weights,
            curve_ids,
            labels,
        }
    }

    /// A dataset with no curves, for prior-only runs.
    pub fn empty(grid: Vec<f64>, num_categories: usize) -> Self {
        Self::new(grid, Vec::new(), DMatrix::zeros(0, num_categories), None)
    }

    pub fn num_curves(&self) -> usize {
        self.y.len()
    }

    pub fn num_replicates(&self) -> usize {
        self.y.first().map_or(0, |m| m.ncols())
    }

    pub fn num_categories(&self) -> usize {
        self.r.ncols()
    }

    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    pub fn r_row(&self, i: usize) -> Vec<f64> {
        self.r.row(i).iter().copied().collect()
    }

    pub fn c_row(&self, i: usize) -> Vec<f64> {
        self.c_weights.row(i).iter().copied().collect()
    }

    /// Replicate-averaged curve `i`.
    pub fn replicate_mean(&self, i: usize) -> DVector<f64> {
        let y = &self.y[i];
        let j = y.ncols().max(1) as f64;
        y.column_sum() / j
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    /// One variance and one decay shared by all categories.
    UniformlyHomogeneous,
    /// Per-category constant variance and decay.
    Homogeneous,
    /// Per-category spline standard-deviation curve and decay.
    Heterogeneous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub kind: CovarianceKind,
    /// Basis for the standard-deviation curves; present iff heterogeneous.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_basis: Option<BasisSpec>,
    pub num_categories: usize,
}

impl CovarianceSpec {
    pub fn uniformly_homogeneous(num_categories: usize) -> Self {
        Self {
            kind: CovarianceKind::UniformlyHomogeneous,
            eta_basis: None,
            num_categories,
        }
    }

    pub fn homogeneous(num_categories: usize) -> Self {
        Self {
            kind: CovarianceKind::Homogeneous,
            eta_basis: None,
            num_categories,
        }
    }

    pub fn heterogeneous(num_categories: usize, eta_basis: BasisSpec) -> Self {
        Self {
            kind: CovarianceKind::Heterogeneous,
            eta_basis: Some(eta_basis),
            num_categories,
        }
    }

    /// Checks that `params` has the layout this spec requires.
    pub fn check_params(&self, params: &CovarianceParams) -> Result<()> {
        let c = self.num_categories;
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        match (self.kind, params) {
            (CovarianceKind::UniformlyHomogeneous, CovarianceParams::UniformlyHomogeneous { .. }) => {
                Ok(())
            }
            (CovarianceKind::Homogeneous, CovarianceParams::Homogeneous { sigma2, phi }) => {
                if sigma2.len() != c || phi.len() != c {
                    return fail(format!("homogeneous parameters need {c} variances and decays"));
                }
                Ok(())
            }
            (CovarianceKind::Heterogeneous, CovarianceParams::Heterogeneous { theta, phi }) => {
                let l = self.eta_basis.as_ref().map_or(0, BasisSpec::dim);
                if theta.len() != c || phi.len() != c || theta.iter().any(|row| row.len() != l) {
                    return fail(format!(
                        "heterogeneous parameters need a {c} x {l} coefficient matrix and {c} decays"
                    ));
                }
                Ok(())
            }
            _ => fail(format!(
                "parameters do not match covariance kind {:?}",
                self.kind
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceParams {
    UniformlyHomogeneous { sigma2: f64, phi: f64 },
    Homogeneous { sigma2: Vec<f64>, phi: Vec<f64> },
    /// `theta[c]` holds the spline coefficients of `eta_c`.
    Heterogeneous { theta: Vec<Vec<f64>>, phi: Vec<f64> },
}

impl CovarianceParams {
    pub fn kind(&self) -> CovarianceKind {
        match self {
            CovarianceParams::UniformlyHomogeneous { .. } => CovarianceKind::UniformlyHomogeneous,
            CovarianceParams::Homogeneous { .. } => CovarianceKind::Homogeneous,
            CovarianceParams::Heterogeneous { .. } => CovarianceKind::Heterogeneous,
        }
    }

    /// Decay parameter of category `c`.
    pub fn phi(&self, c: usize) -> f64 {
        match self {
            CovarianceParams::UniformlyHomogeneous { phi, .. } => *phi,
            CovarianceParams::Homogeneous { phi, .. } | CovarianceParams::Heterogeneous { phi, .. } => {
                phi[c]
            }
        }
    }
}

/// A point in parameter space: mean-curve coefficients plus covariance
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    /// `C x K`; row `c` holds the spline coefficients of `alpha_c`.
    pub beta: DMatrix<f64>,
    pub cov: CovarianceParams,
}

impl ParameterState {
    /// Coefficients stacked category-major: `(beta_11..beta_1K, beta_21, ...)`.
    pub fn beta_vec(&self) -> DVector<f64> {
        let (c, k) = self.beta.shape();
        DVector::from_fn(c * k, |idx, _| self.beta[(idx / k, idx % k)])
    }

    pub fn set_beta_vec(&mut self, v: &DVector<f64>) {
        let (c, k) = self.beta.shape();
        debug_assert_eq!(v.len(), c * k);
        for idx in 0..c * k {
            self.beta[(idx / k, idx % k)] = v[idx];
        }
    }

    pub fn beta_row(&self, c: usize) -> Vec<f64> {
        self.beta.row(c).iter().copied().collect()
    }
}

/// Names of the covariance parameters in update order: variances (or eta
/// coefficients) then decays, 1-based.
pub fn covariance_param_names(spec: &CovarianceSpec) -> Vec<String> {
    let c = spec.num_categories;
    match spec.kind {
        CovarianceKind::UniformlyHomogeneous => vec!["sigma2".into(), "phi".into()],
        CovarianceKind::Homogeneous => (1..=c)
            .map(|cc| format!("sigma2_{cc}"))
            .chain((1..=c).map(|cc| format!("phi_{cc}")))
            .collect(),
        CovarianceKind::Heterogeneous => {
            let l = spec.eta_basis.as_ref().map_or(0, |b| b.dim());
            (1..=c)
                .flat_map(|cc| (1..=l).map(move |ll| format!("theta_{cc}_{ll}")))
                .chain((1..=c).map(|cc| format!("phi_{cc}")))
                .collect()
        }
    }
}

/// Names of every scalar in a [`ParameterState`], in the order of
/// [`ParameterState::to_flat`].
pub fn parameter_names(spec: &CovarianceSpec, num_coef: usize) -> Vec<String> {
    let mut names: Vec<String> = (1..=spec.num_categories)
        .flat_map(|c| (1..=num_coef).map(move |k| format!("beta_{c}_{k}")))
        .collect();
    names.extend(covariance_param_names(spec));
    names
}

impl ParameterState {
    /// Names matching [`ParameterState::to_flat`], read off this state's
    /// layout.
    pub fn flat_names(&self) -> Vec<String> {
        let (c, k) = self.beta.shape();
        let spec = match &self.cov {
            CovarianceParams::UniformlyHomogeneous { .. } => CovarianceSpec::uniformly_homogeneous(c),
            CovarianceParams::Homogeneous { .. } => CovarianceSpec::homogeneous(c),
            CovarianceParams::Heterogeneous { theta, .. } => {
                let l = theta.first().map_or(0, Vec::len);
                let mut names = parameter_names(&CovarianceSpec::uniformly_homogeneous(c), k);
                names.truncate(c * k);
                names.extend((1..=c).flat_map(|cc| (1..=l).map(move |ll| format!("theta_{cc}_{ll}"))));
                names.extend((1..=c).map(|cc| format!("phi_{cc}")));
                return names;
            }
        };
        parameter_names(&spec, k)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.beta_vec().iter().copied().collect();
        match &self.cov {
            CovarianceParams::UniformlyHomogeneous { sigma2, phi } => v.extend([*sigma2, *phi]),
            CovarianceParams::Homogeneous { sigma2, phi } => {
                v.extend(sigma2);
                v.extend(phi);
            }
            CovarianceParams::Heterogeneous { theta, phi } => {
                for row in theta {
                    v.extend(row);
                }
                v.extend(phi);
            }
        }
        v
    }

    pub fn from_flat(spec: &CovarianceSpec, num_coef: usize, values: &[f64]) -> Result<Self> {
        let c = spec.num_categories;
        let expected = parameter_names(spec, num_coef).len();
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "flattened parameters",
                expected,
                got: values.len(),
            });
        }
        let beta = DMatrix::from_fn(c, num_coef, |cc, k| values[cc * num_coef + k]);
        let rest = &values[c * num_coef..];
        let cov = match spec.kind {
            CovarianceKind::UniformlyHomogeneous => CovarianceParams::UniformlyHomogeneous {
                sigma2: rest[0],
                phi: rest[1],
            },
            CovarianceKind::Homogeneous => CovarianceParams::Homogeneous {
                sigma2: rest[..c].to_vec(),
                phi: rest[c..].to_vec(),
            },
            CovarianceKind::Heterogeneous => {
                let l = spec.eta_basis.as_ref().map_or(0, |b| b.dim());
                CovarianceParams::Heterogeneous {
                    theta: rest[..c * l].chunks(l.max(1)).map(|r| r.to_vec()).collect(),
                    phi: rest[c * l..].to_vec(),
                }
            }
        };
        Ok(Self { beta, cov })
    }
}

/// Standard-deviation curve `eta_c` on `grid`.
pub fn eta_curve(
    spec: &CovarianceSpec,
    params: &CovarianceParams,
    c: usize,
    grid: &[f64],
) -> Result<Vec<f64>> {
    if c >= spec.num_categories {
        return Err(Error::InvalidArgument(format!(
            "category {c} out of range (C = {})",
            spec.num_categories
        )));
    }
    spec.check_params(params)?;
    match params {
        CovarianceParams::UniformlyHomogeneous { sigma2, .. } => Ok(vec![sigma2.sqrt(); grid.len()]),
        CovarianceParams::Homogeneous { sigma2, .. } => Ok(vec![sigma2[c].sqrt(); grid.len()]),
        CovarianceParams::Heterogeneous { theta, .. } => {
            let basis = spec.eta_basis.as_ref().ok_or_else(|| {
                Error::InvalidArgument("heterogeneous covariance without eta basis".into())
            })?;
            basis.curve_values(&theta[c], grid)
        }
    }
}

/// Cross-covariance `Z(s_a, t_b)` between two sets of points for a curve
/// with covariance weights `c_weights_row`.
pub fn cross_covariance(
    spec: &CovarianceSpec,
    params: &CovarianceParams,
    c_weights_row: &[f64],
    grid_a: &[f64],
    grid_b: &[f64],
) -> Result<DMatrix<f64>> {
    if c_weights_row.len() != spec.num_categories {
        return Err(Error::DimensionMismatch {
            what: "covariance weights",
            expected: spec.num_categories,
            got: c_weights_row.len(),
        });
    }
    let mut z = DMatrix::zeros(grid_a.len(), grid_b.len());
    for (c, &w) in c_weights_row.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let eta_a = eta_curve(spec, params, c, grid_a)?;
        let eta_b = eta_curve(spec, params, c, grid_b)?;
        let phi = params.phi(c);
        for (col, (&s, &es)) in grid_b.iter().zip(&eta_b).enumerate() {
            for (row, (&t, &et)) in grid_a.iter().zip(&eta_a).enumerate() {
                z[(row, col)] += w * (et * es) * (-phi * (t - s).abs()).exp();
            }
        }
    }
    Ok(z)
}

/// Covariance matrix `Z_i` of one aggregated curve on `grid`.
pub fn covariance_matrix(
    spec: &CovarianceSpec,
    params: &CovarianceParams,
    c_weights_row: &[f64],
    grid: &[f64],
) -> Result<DMatrix<f64>> {
    cross_covariance(spec, params, c_weights_row, grid, grid)
}

/// Exponential correlation matrix `exp(-phi |t_a - t_b|)`.
pub fn exp_correlation(phi: f64, grid: &[f64]) -> DMatrix<f64> {
    let n = grid.len();
    DMatrix::from_fn(n, n, |a, b| (-phi * (grid[a] - grid[b]).abs()).exp())
}

/// Mean of curve `i`: `sum_c r_c * (B beta_c)` on `grid`.
pub fn mean_vector(
    beta: &DMatrix<f64>,
    basis: &BasisSpec,
    r_row: &[f64],
    grid: &[f64],
) -> Result<DVector<f64>> {
    if beta.ncols() != basis.dim() {
        return Err(Error::DimensionMismatch {
            what: "beta columns",
            expected: basis.dim(),
            got: beta.ncols(),
        });
    }
    if r_row.len() != beta.nrows() {
        return Err(Error::DimensionMismatch {
            what: "mean weights",
            expected: beta.nrows(),
            got: r_row.len(),
        });
    }
    let b = basis.matrix(grid)?;
    Ok(mean_from_basis_matrix(beta, &b, r_row))
}

pub(crate) fn mean_from_basis_matrix(
    beta: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r_row: &[f64],
) -> DVector<f64> {
    // combined coefficients sum_c r_c beta_c, then a single product
    let mut coef = DVector::zeros(beta.ncols());
    for (c, &w) in r_row.iter().enumerate() {
        coef += beta.row(c).transpose() * w;
    }
    b * coef
}

/// Checks grid ordering, finiteness, weight signs, table shapes and the rank
/// of the mean weights. Every violation found is reported.
pub fn validate_dataset(data: &AggregatedDataset, spec: &CovarianceSpec) -> Result<()> {
    let mut v = Vec::new();
    let t = data.grid.len();
    let c = data.num_categories();

    for (k, g) in data.grid.iter().enumerate() {
        if !g.is_finite() {
            v.push(Violation::NonFiniteGrid { index: k });
        }
    }
    for k in 0..t.saturating_sub(1) {
        if data.grid[k] >= data.grid[k + 1] {
            v.push(Violation::GridNotIncreasing { index: k });
        }
    }
    if c != spec.num_categories {
        v.push(Violation::ShapeMismatch {
            what: "number of categories".into(),
            expected: spec.num_categories,
            got: c,
        });
    }
    if data.c_weights.shape() != data.r.shape() {
        v.push(Violation::ShapeMismatch {
            what: "covariance weight rows".into(),
            expected: data.r.nrows(),
            got: data.c_weights.nrows(),
        });
    }
    if data.r.nrows() != data.num_curves() {
        v.push(Violation::ShapeMismatch {
            what: "weight rows".into(),
            expected: data.num_curves(),
            got: data.r.nrows(),
        });
    }
    let j = data.num_replicates();
    for (i, y) in data.y.iter().enumerate() {
        if y.nrows() != t {
            v.push(Violation::ShapeMismatch {
                what: format!("grid points of curve {i}"),
                expected: t,
                got: y.nrows(),
            });
        }
        if y.ncols() != j || j == 0 {
            v.push(Violation::ShapeMismatch {
                what: format!("replicates of curve {i}"),
                expected: j.max(1),
                got: y.ncols(),
            });
        }
        for jj in 0..y.ncols() {
            for k in 0..y.nrows() {
                if !y[(k, jj)].is_finite() {
                    v.push(Violation::NonFiniteObservation { i, j: jj, k });
                }
            }
        }
    }
    for i in 0..data.r.nrows() {
        for cc in 0..data.r.ncols() {
            let value = data.r[(i, cc)];
            if !value.is_finite() {
                v.push(Violation::InvalidWeight { i, c: cc, value });
            }
        }
    }
    for i in 0..data.c_weights.nrows() {
        for cc in 0..data.c_weights.ncols() {
            let value = data.c_weights[(i, cc)];
            if !value.is_finite() || value < 0.0 {
                v.push(Violation::InvalidCovarianceWeight { i, c: cc, value });
            }
        }
    }
    // A data-free dataset is allowed (prior-only runs); otherwise the
    // categories must be identifiable from the weights.
    if data.num_curves() > 0 && data.r.iter().all(|x| x.is_finite()) {
        let rank = numerical_rank(&data.r, RANK_TOLERANCE);
        if rank < c {
            v.push(Violation::RankDeficient { rank, expected: c });
        }
    }
    if let Some(eta) = &spec.eta_basis {
        if spec.kind == CovarianceKind::Heterogeneous {
            for (k, &g) in data.grid.iter().enumerate() {
                if !eta.contains(g) {
                    v.push(Violation::ShapeMismatch {
                        what: format!("grid point {k} inside eta basis domain"),
                        expected: 1,
                        got: 0,
                    });
                }
            }
        }
    }

    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(v))
    }
}
