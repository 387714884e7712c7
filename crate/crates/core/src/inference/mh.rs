//! Scalar Metropolis-Hastings steps.

use rand::Rng;
use rand_distr::StandardNormal;

/// Result of one Metropolis-Hastings step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhOutcome {
    pub value: f64,
    pub accepted: bool,
    /// The target was NaN at the proposal; the proposal was rejected.
    pub invalid_target: bool,
}

/// Random-walk step on `log x` for a positive scalar.
///
/// The proposal is `x' = x exp(sd * z)`. Because the proposal density is
/// log-normal the acceptance ratio carries the factor `x' / x`.
pub fn mh_update_positive_scalar<R, F>(rng: &mut R, current: f64, mut log_target: F, proposal_sd: f64) -> MhOutcome
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> f64,
{
    let current_lt = log_target(current);
    log_normal_step(rng, current, current_lt, &mut log_target, proposal_sd, true).0
}

/// Gaussian random-walk step for an unconstrained scalar.
pub fn mh_update_real_scalar<R, F>(rng: &mut R, current: f64, mut log_target: F, proposal_sd: f64) -> MhOutcome
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> f64,
{
    let current_lt = log_target(current);
    gaussian_step(rng, current, current_lt, &mut log_target, proposal_sd).0
}

/// Log-normal step with a cached target value at `current`. Returns the
/// outcome and the target value at the returned point.
pub(crate) fn log_normal_step<R, F>(
    rng: &mut R,
    current: f64,
    current_lt: f64,
    log_target: &mut F,
    proposal_sd: f64,
    jacobian: bool,
) -> (MhOutcome, f64)
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> f64,
{
    let z: f64 = rng.sample(StandardNormal);
    let proposal = current * (proposal_sd * z).exp();
    let u: f64 = rng.random();
    let lt = if proposal > 0.0 && proposal.is_finite() {
        log_target(proposal)
    } else {
        f64::NEG_INFINITY
    };
    let correction = if jacobian { proposal.ln() - current.ln() } else { 0.0 };
    decide(current, current_lt, proposal, lt, correction, u)
}

pub(crate) fn gaussian_step<R, F>(
    rng: &mut R,
    current: f64,
    current_lt: f64,
    log_target: &mut F,
    proposal_sd: f64,
) -> (MhOutcome, f64)
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> f64,
{
    let z: f64 = rng.sample(StandardNormal);
    let proposal = current + proposal_sd * z;
    let u: f64 = rng.random();
    let lt = log_target(proposal);
    decide(current, current_lt, proposal, lt, 0.0, u)
}

fn decide(current: f64, current_lt: f64, proposal: f64, lt: f64, correction: f64, u: f64) -> (MhOutcome, f64) {
    if lt.is_nan() {
        let out = MhOutcome {
            value: current,
            accepted: false,
            invalid_target: true,
        };
        return (out, current_lt);
    }
    let log_ratio = lt - current_lt + correction;
    // u in [0, 1): ln(0) = -inf always accepts a finite ratio
    if lt > f64::NEG_INFINITY && u.ln() < log_ratio {
        let out = MhOutcome {
            value: proposal,
            accepted: true,
            invalid_target: false,
        };
        (out, lt)
    } else {
        let out = MhOutcome {
            value: current,
            accepted: false,
            invalid_target: false,
        };
        (out, current_lt)
    }
}

/// Robbins-Monro adaptation of a log proposal scale towards a target
/// acceptance rate.
#[derive(Debug, Clone)]
pub(crate) struct ScaleAdapter {
    pub target: f64,
    step: usize,
}

impl ScaleAdapter {
    pub fn new(target: f64) -> Self {
        Self { target, step: 0 }
    }

    pub fn next_iteration(&mut self) {
        self.step += 1;
    }

    pub fn adapt(&self, sd: &mut f64, accepted: bool) {
        let gain = (self.step as f64 + 1.0).powf(-0.6);
        let a = if accepted { 1.0 } else { 0.0 };
        *sd = (sd.ln() + gain * (a - self.target)).exp().clamp(1e-6, 1e3);
    }
}
