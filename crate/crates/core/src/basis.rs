//! Cubic B-spline bases on clamped knot vectors.
//!
//! The same basis family expands both the category mean curves and, in the
//! heterogeneous covariance model, the standard-deviation curves. Knot
//! vectors repeat each boundary knot `degree + 1` times, so a basis with `n`
//! interior knots has dimension `n + degree + 1` and interpolates at both
//! ends of the domain.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Polynomial degree used throughout (cubic).
pub const CUBIC: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisRepr", into = "BasisRepr")]
pub struct BasisSpec {
    degree: usize,
    interior_knots: Vec<f64>,
    domain_lo: f64,
    domain_hi: f64,
    knots: Vec<f64>,
}

/// Serialized form: the knot vector is rebuilt and validated on load.
#[derive(Serialize, Deserialize)]
struct BasisRepr {
    #[serde(default = "cubic")]
    degree: usize,
    interior_knots: Vec<f64>,
    domain: [f64; 2],
}

fn cubic() -> usize {
    CUBIC
}

impl TryFrom<BasisRepr> for BasisSpec {
    type Error = Error;

    fn try_from(r: BasisRepr) -> Result<Self> {
        Self::with_degree(r.degree, r.interior_knots, r.domain[0], r.domain[1])
    }
}

impl From<BasisSpec> for BasisRepr {
    fn from(b: BasisSpec) -> Self {
        Self {
            degree: b.degree,
            interior_knots: b.interior_knots,
            domain: [b.domain_lo, b.domain_hi],
        }
    }
}

impl BasisSpec {
    /// Cubic basis with the given interior knots on `[lo, hi]`.
    pub fn new(interior_knots: Vec<f64>, lo: f64, hi: f64) -> Result<Self> {
        Self::with_degree(CUBIC, interior_knots, lo, hi)
    }

    pub fn with_degree(degree: usize, interior_knots: Vec<f64>, lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::InvalidBasis(format!(
                "domain [{lo}, {hi}] must be finite with lo < hi"
            )));
        }
        for (idx, &k) in interior_knots.iter().enumerate() {
            if !k.is_finite() || k <= lo || k >= hi {
                return Err(Error::InvalidBasis(format!(
                    "interior knot {idx} ({k}) is not strictly inside ({lo}, {hi})"
                )));
            }
            if idx > 0 && k <= interior_knots[idx - 1] {
                return Err(Error::InvalidBasis(format!(
                    "interior knot {idx} ({k}) does not exceed knot {} ({})",
                    idx - 1,
                    interior_knots[idx - 1]
                )));
            }
        }
        let mut knots = Vec::with_capacity(interior_knots.len() + 2 * (degree + 1));
        knots.extend(std::iter::repeat_n(lo, degree + 1));
        knots.extend_from_slice(&interior_knots);
        knots.extend(std::iter::repeat_n(hi, degree + 1));
        Ok(Self {
            degree,
            interior_knots,
            domain_lo: lo,
            domain_hi: hi,
            knots,
        })
    }

    /// Cubic basis with `count` equally spaced interior knots on `[lo, hi]`.
    pub fn equally_spaced(count: usize, lo: f64, hi: f64) -> Result<Self> {
        let step = (hi - lo) / (count as f64 + 1.0);
        let knots = (1..=count).map(|m| lo + step * m as f64).collect();
        Self::new(knots, lo, hi)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior_knots
    }

    /// Full clamped knot vector.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.domain_lo, self.domain_hi)
    }

    /// Number of basis functions.
    pub fn dim(&self) -> usize {
        self.interior_knots.len() + self.degree + 1
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.domain_lo && t <= self.domain_hi
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(Error::OutsideDomain {
                t,
                lo: self.domain_lo,
                hi: self.domain_hi,
            })
        }
    }

    /// Index `s` of the knot span with `knots[s] <= t < knots[s + 1]`; the
    /// right endpoint is assigned to the last non-degenerate span.
    fn span(&self, t: f64) -> usize {
        let p = self.degree;
        let last = self.dim() - 1;
        if t >= self.domain_hi {
            return last;
        }
        // first knot strictly greater than t, within [p + 1, last + 1]
        let upper = self.knots[p + 1..=last + 1].partition_point(|&k| k <= t);
        p + upper
    }

    /// Values of the `degree + 1` basis functions that may be nonzero at
    /// `t`, plus the index of the first of them.
    fn nonzero(&self, t: f64) -> (usize, Vec<f64>) {
        let p = self.degree;
        let s = self.span(t);
        let u = &self.knots;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = t - u[s + 1 - j];
            right[j] = u[s + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { n[r] / denom };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        (s - p, n)
    }

    /// All `dim()` basis functions evaluated at `t`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        self.check_domain(t)?;
        let mut out = vec![0.0; self.dim()];
        let (first, vals) = self.nonzero(t);
        out[first..first + vals.len()].copy_from_slice(&vals);
        Ok(out)
    }

    /// Evaluation matrix with one row per grid point and one column per basis
    /// function.
    pub fn matrix(&self, grid: &[f64]) -> Result<DMatrix<f64>> {
        let mut b = DMatrix::zeros(grid.len(), self.dim());
        for (row, &t) in grid.iter().enumerate() {
            self.check_domain(t)?;
            let (first, vals) = self.nonzero(t);
            for (off, v) in vals.into_iter().enumerate() {
                b[(row, first + off)] = v;
            }
        }
        Ok(b)
    }

    /// Curve `sum_k coeffs[k] * B_k(t)` on `grid`.
    pub fn curve_values(&self, coeffs: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
        if coeffs.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "spline coefficients",
                expected: self.dim(),
                got: coeffs.len(),
            });
        }
        grid.iter()
            .map(|&t| {
                self.check_domain(t)?;
                let (first, vals) = self.nonzero(t);
                Ok(vals.iter().zip(&coeffs[first..]).map(|(b, c)| b * c).sum())
            })
            .collect()
    }

    /// Block design matrix `[w_1 B | w_2 B | ... | w_C B]` of shape
    /// `T x (C * K)`, where `B` is [`BasisSpec::matrix`] on `grid`.
    pub fn design_matrix(&self, grid: &[f64], weights: &[f64]) -> Result<DMatrix<f64>> {
        if grid.is_empty() {
            return Err(Error::InvalidArgument("empty grid".into()));
        }
        if weights.is_empty() {
            return Err(Error::InvalidArgument("empty weights".into()));
        }
        let b = self.matrix(grid)?;
        Ok(kron_row(weights, &b))
    }
}

/// `[w_1 M | w_2 M | ... ]`.
pub(crate) fn kron_row(weights: &[f64], m: &DMatrix<f64>) -> DMatrix<f64> {
    let k = m.ncols();
    let mut x = DMatrix::zeros(m.nrows(), weights.len() * k);
    for (c, &w) in weights.iter().enumerate() {
        x.columns_mut(c * k, k).copy_from(&(m * w));
    }
    x
}
