//! Dense factorization helpers shared by the likelihood, the predictive
//! distribution and the simulator.

use nalgebra::{DMatrix, DVector};

/// Relative diagonal jitter levels tried in order, as multiples of the mean
/// diagonal entry.
pub const JITTER_LEVELS: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Lower Cholesky factor of a jittered symmetric matrix.
#[derive(Debug, Clone)]
pub struct Factor {
    l: DMatrix<f64>,
    log_det: f64,
    jitter: f64,
}

impl Factor {
    /// Factorizes `m + eps * mean(diag(m)) * I`, escalating `eps` through
    /// [`JITTER_LEVELS`]. Returns `None` when every level fails.
    pub fn new(m: &DMatrix<f64>) -> Option<Self> {
        let n = m.nrows();
        if n == 0 {
            return Some(Self {
                l: DMatrix::zeros(0, 0),
                log_det: 0.0,
                jitter: 0.0,
            });
        }
        let mean_diag = m.diagonal().mean();
        if !mean_diag.is_finite() || mean_diag <= 0.0 {
            return None;
        }
        for eps in JITTER_LEVELS {
            let jitter = eps * mean_diag;
            let mut a = m.clone();
            for i in 0..n {
                a[(i, i)] += jitter;
            }
            if let Some(chol) = a.cholesky() {
                let l = chol.unpack();
                let log_det = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
                if log_det.is_finite() {
                    return Some(Self { l, log_det, jitter });
                }
            }
        }
        None
    }

    /// Plain Cholesky when it succeeds, otherwise [`Factor::new`].
    pub fn exact_or_jittered(m: &DMatrix<f64>) -> Option<Self> {
        if let Some(chol) = m.clone().cholesky() {
            let l = chol.unpack();
            let log_det = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
            if log_det.is_finite() {
                return Some(Self { l, log_det, jitter: 0.0 });
            }
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `log |m + jitter I|`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Absolute jitter that was added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Replaces `b` with `L^{-1} b`.
    pub fn whiten_mut(&self, b: &mut DMatrix<f64>) {
        if self.dim() > 0 {
            self.l.solve_lower_triangular_unchecked_mut(b);
        }
    }

    pub fn whiten(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = b.clone();
        self.whiten_mut(&mut out);
        out
    }

    pub fn whiten_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut out = b.clone();
        if self.dim() > 0 {
            self.l.solve_lower_triangular_unchecked_mut(&mut out);
        }
        out
    }

    /// `m^{-1} b` using both triangular solves.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.whiten(b);
        if self.dim() > 0 {
            self.l.tr_solve_lower_triangular_unchecked_mut(&mut out);
        }
        out
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut out = self.whiten_vec(b);
        if self.dim() > 0 {
            self.l.tr_solve_lower_triangular_unchecked_mut(&mut out);
        }
        out
    }

    /// Sum over columns of `b` of the quadratic forms `b_j' m^{-1} b_j`.
    pub fn quad_sum(&self, b: &DMatrix<f64>) -> f64 {
        self.whiten(b).norm_squared()
    }
}

/// Numerical rank: singular values at or below `rel_tol * sigma_max` count as
/// zero.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Compresses a `T x J` residual matrix with `J > T` into a `T x T` matrix
/// `F` with `F F' = E E'`; returns `E` unchanged otherwise.
pub fn compress_columns(e: DMatrix<f64>) -> DMatrix<f64> {
    let (t, j) = e.shape();
    if j <= t {
        return e;
    }
    let qr = e.transpose().qr();
    qr.r().transpose()
}
