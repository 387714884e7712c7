//! Gibbs sampler with Metropolis-Hastings steps for the covariance
//! parameters.
//!
//! Each iteration draws the mean coefficients from their normal full
//! conditional, then updates every covariance scalar one at a time in a
//! fixed order: variances (or eta coefficients) first, then decays.
//! Positive scalars use log-normal random walks; eta coefficients use
//! Gaussian random walks since their sign is free.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::conditional::conditional_from;
use super::likelihood::{log_lik_from, Context, CovState, Factors};
use super::mh::{gaussian_step, log_normal_step, MhOutcome, ScaleAdapter};
use super::prior::PriorSpec;
use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::linalg::Factor;
use crate::model::{
    covariance_param_names, validate_dataset, AggregatedDataset, CovarianceKind, CovarianceParams, CovarianceSpec, ParameterState,
};
use crate::seed::derive_seed;

/// Default log-scale step for positive scalars.
pub const DEFAULT_LOG_STEP: f64 = 0.3;
/// Default step for eta coefficients.
pub const DEFAULT_THETA_STEP: f64 = 0.1;
/// Acceptance rate targeted while adapting proposal scales.
pub const TARGET_ACCEPTANCE: f64 = 0.35;
/// Starting values of extra chains are scaled up or down by this factor.
pub const OVERDISPERSION: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// One step size per Metropolis-Hastings scalar, in the order of
    /// [`mh_scalar_names`]. Defaults are used when absent.
    pub proposal_sd: Option<Vec<f64>>,
    /// Adapt proposal scales during burn-in; frozen afterwards.
    pub adapt: bool,
    pub seed: u64,
    pub n_chains: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_iter: 20_000,
            burn_in: 2_000,
            thin: 18,
            proposal_sd: None,
            adapt: true,
            seed: 42,
            n_chains: 2,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_iter == 0 {
            return bad("n_iter must be positive");
        }
        if self.burn_in >= self.n_iter {
            return bad("burn_in must be smaller than n_iter");
        }
        if self.thin == 0 {
            return bad("thin must be positive");
        }
        if self.n_chains == 0 {
            return bad("n_chains must be positive");
        }
        if self.retained() < 10 {
            return bad("(n_iter - burn_in) / thin must be at least 10");
        }
        if let Some(sd) = &self.proposal_sd {
            if sd.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
                return bad("proposal scales must be positive");
            }
        }
        Ok(())
    }

    /// Number of stored draws per chain.
    pub fn retained(&self) -> usize {
        self.n_iter.saturating_sub(self.burn_in) / self.thin
    }

    fn keeps(&self, iter: usize) -> bool {
        iter >= self.burn_in && (iter - self.burn_in + 1) % self.thin == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceStat {
    pub name: String,
    /// Fraction of accepted proposals after burn-in.
    pub rate: f64,
    /// Proposals rejected because the target evaluated to NaN.
    pub invalid: usize,
    /// Proposal scale used after burn-in.
    pub proposal_sd: f64,
}

/// Thinned post-burn-in draws of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub chain: usize,
    pub seed: u64,
    pub draws: Vec<ParameterState>,
    /// Log posterior (up to a constant) at every stored draw.
    pub log_posterior: Vec<f64>,
    pub acceptance: Vec<AcceptanceStat>,
    pub config: McmcConfig,
}

/// Names of the Metropolis-Hastings scalars in update order.
pub fn mh_scalar_names(spec: &CovarianceSpec) -> Vec<String> {
    covariance_param_names(spec)
}

fn default_scales(spec: &CovarianceSpec) -> Vec<f64> {
    let c = spec.num_categories;
    match spec.kind {
        CovarianceKind::UniformlyHomogeneous => vec![DEFAULT_LOG_STEP; 2],
        CovarianceKind::Homogeneous => vec![DEFAULT_LOG_STEP; 2 * c],
        CovarianceKind::Heterogeneous => {
            let l = spec.eta_basis.as_ref().map_or(0, |b| b.dim());
            let mut v = vec![DEFAULT_THETA_STEP; c * l];
            v.extend(std::iter::repeat_n(DEFAULT_LOG_STEP, c));
            v
        }
    }
}

/// Which scalar a Metropolis-Hastings step moves.
#[derive(Debug, Clone, Copy)]
enum Slot {
    Sigma2(usize),
    Phi(usize),
    Theta(usize, usize),
}

fn slots(spec: &CovarianceSpec) -> Vec<Slot> {
    let c = spec.num_categories;
    match spec.kind {
        CovarianceKind::UniformlyHomogeneous => vec![Slot::Sigma2(0), Slot::Phi(0)],
        CovarianceKind::Homogeneous => (0..c).map(Slot::Sigma2).chain((0..c).map(Slot::Phi)).collect(),
        CovarianceKind::Heterogeneous => {
            let l = spec.eta_basis.as_ref().map_or(0, |b| b.dim());
            (0..c)
                .flat_map(|cc| (0..l).map(move |ll| Slot::Theta(cc, ll)))
                .chain((0..c).map(Slot::Phi))
                .collect()
        }
    }
}

fn get(params: &CovarianceParams, slot: Slot) -> f64 {
    match (params, slot) {
        (CovarianceParams::UniformlyHomogeneous { sigma2, .. }, Slot::Sigma2(_)) => *sigma2,
        (CovarianceParams::UniformlyHomogeneous { phi, .. }, Slot::Phi(_)) => *phi,
        (CovarianceParams::Homogeneous { sigma2, .. }, Slot::Sigma2(c)) => sigma2[c],
        (CovarianceParams::Homogeneous { phi, .. }, Slot::Phi(c)) => phi[c],
        (CovarianceParams::Heterogeneous { theta, .. }, Slot::Theta(c, l)) => theta[c][l],
        (CovarianceParams::Heterogeneous { phi, .. }, Slot::Phi(c)) => phi[c],
        _ => unreachable!("slot does not match parameter layout"),
    }
}

fn set(params: &mut CovarianceParams, slot: Slot, x: f64) {
    match (params, slot) {
        (CovarianceParams::UniformlyHomogeneous { sigma2, .. }, Slot::Sigma2(_)) => *sigma2 = x,
        (CovarianceParams::UniformlyHomogeneous { phi, .. }, Slot::Phi(_)) => *phi = x,
        (CovarianceParams::Homogeneous { sigma2, .. }, Slot::Sigma2(c)) => sigma2[c] = x,
        (CovarianceParams::Homogeneous { phi, .. }, Slot::Phi(c)) => phi[c] = x,
        (CovarianceParams::Heterogeneous { theta, .. }, Slot::Theta(c, l)) => theta[c][l] = x,
        (CovarianceParams::Heterogeneous { phi, .. }, Slot::Phi(c)) => phi[c] = x,
        _ => unreachable!("slot does not match parameter layout"),
    }
}

fn slot_log_prior(prior: &PriorSpec, slot: Slot, x: f64) -> f64 {
    match slot {
        Slot::Sigma2(c) => prior.sigma2[c].log_kernel(x),
        Slot::Phi(c) => prior.phi[c].log_kernel(x),
        Slot::Theta(c, l) => prior.theta_log_kernel(c, l, x),
    }
}

/// Mutable state of one chain together with its caches.
struct Chain<'a> {
    ctx: Context<'a>,
    prior: &'a PriorSpec,
    slots: Vec<Slot>,
    state: ParameterState,
    cov: CovState,
    residuals: Vec<DMatrix<f64>>,
    ll: f64,
}

impl<'a> Chain<'a> {
    fn new(ctx: Context<'a>, prior: &'a PriorSpec, state: ParameterState) -> Result<Self> {
        let cov = CovState::new(&ctx, &state.cov)?;
        let residuals = ctx.residuals(&state.beta);
        let ll = log_lik_from(&ctx, &cov.factors, &residuals);
        let slots = slots(ctx.spec);
        Ok(Self {
            ctx,
            prior,
            slots,
            state,
            cov,
            residuals,
            ll,
        })
    }

    fn update_beta<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let cond = conditional_from(&self.ctx, &self.cov.factors, self.prior)?;
        self.state.set_beta_vec(&cond.sample(rng));
        self.residuals = self.ctx.residuals(&self.state.beta);
        self.ll = log_lik_from(&self.ctx, &self.cov.factors, &self.residuals);
        Ok(())
    }

    fn step<R: Rng + ?Sized>(&mut self, rng: &mut R, idx: usize, sd: f64) -> MhOutcome {
        let slot = self.slots[idx];
        let current = get(&self.state.cov, slot);
        let current_lt = self.ll + slot_log_prior(self.prior, slot, current);
        let (category, phi_changed) = match slot {
            Slot::Sigma2(c) | Slot::Theta(c, _) => (c, false),
            Slot::Phi(c) => (c, true),
        };

        let mut last: Option<(CovarianceParams, CovState, f64)> = None;
        let (out, _) = {
            let ctx = &self.ctx;
            let base = &self.state.cov;
            let cov = &self.cov;
            let residuals = &self.residuals;
            let prior = self.prior;
            let mut target = |x: f64| {
                let mut p = base.clone();
                set(&mut p, slot, x);
                let lp = slot_log_prior(prior, slot, x);
                if lp == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                match cov.update_category(ctx, &p, category, phi_changed) {
                    Ok(cs) => {
                        let ll = log_lik_from(ctx, &cs.factors, residuals);
                        last = Some((p, cs, ll));
                        ll + lp
                    }
                    Err(_) => f64::NEG_INFINITY,
                }
            };
            match slot {
                Slot::Theta(..) => gaussian_step(rng, current, current_lt, &mut target, sd),
                _ => log_normal_step(rng, current, current_lt, &mut target, sd, true),
            }
        };
        if out.accepted {
            let (p, cs, ll) = last.expect("accepted proposal was evaluated");
            self.state.cov = p;
            self.cov = cs;
            self.ll = ll;
        }
        out
    }

    fn log_posterior(&self) -> f64 {
        self.ll + self.prior.log_prior(&self.state)
    }
}

/// Starting point: coefficients fitted with identity covariance, variances
/// from the residual variance and decays at their prior mean. Chain `k > 0`
/// scales the covariance scalars up (odd `k`) or down (even `k`).
fn initial_state(ctx: &Context<'_>, prior: &PriorSpec, chain: usize) -> Result<ParameterState> {
    let spec = ctx.spec;
    let c = spec.num_categories;
    let n = ctx.grid_len();
    let ident = Factors::Shared {
        base: Factor::new(&DMatrix::identity(n, n)).ok_or(Error::Factorization { curve: None })?,
        scale: vec![1.0; ctx.num_curves()],
    };
    let cond = conditional_from(ctx, &ident, prior)?;
    let mut beta = prior.beta_mean.clone();
    let k = beta.ncols();
    for idx in 0..cond.mean.len() {
        beta[(idx / k, idx % k)] = cond.mean[idx];
    }

    let count = (ctx.num_curves() * ctx.data.num_replicates() * n) as f64;
    let var = if count > 0.0 {
        let ss: f64 = ctx.residuals(&beta).iter().map(|e| e.norm_squared()).sum();
        let mean_weight = ctx.c_total.iter().sum::<f64>() / ctx.num_curves() as f64;
        Some(ss / count / mean_weight)
    } else {
        None
    }
    .filter(|v| v.is_finite() && *v > 0.0);

    let factor = match chain {
        0 => 1.0,
        k if k % 2 == 1 => OVERDISPERSION,
        _ => 1.0 / OVERDISPERSION,
    };
    let phi: Vec<f64> = prior.phi.iter().map(|g| g.mean() * factor).collect();
    let cov = match spec.kind {
        CovarianceKind::UniformlyHomogeneous => CovarianceParams::UniformlyHomogeneous {
            sigma2: var.unwrap_or_else(|| prior.sigma2[0].center()) * factor,
            phi: phi[0],
        },
        CovarianceKind::Homogeneous => CovarianceParams::Homogeneous {
            sigma2: (0..c)
                .map(|cc| var.unwrap_or_else(|| prior.sigma2[cc].center()) * factor)
                .collect(),
            phi,
        },
        CovarianceKind::Heterogeneous => {
            let mean = prior.theta_mean.as_ref().expect("validated prior");
            let theta = (0..c)
                .map(|cc| match var {
                    Some(v) => vec![(v * factor).sqrt(); mean.ncols()],
                    None => mean.row(cc).iter().map(|m| m * factor.sqrt()).collect(),
                })
                .collect();
            CovarianceParams::Heterogeneous { theta, phi }
        }
    };
    Ok(ParameterState { beta, cov })
}

/// One sweep over all covariance scalars at fixed proposal scales. Returns
/// the new state and the acceptance flag of every scalar, in the order of
/// [`mh_scalar_names`].
#[allow(clippy::too_many_arguments)]
pub fn update_covariance_params<R: Rng + ?Sized>(
    rng: &mut R,
    state: &ParameterState,
    data: &AggregatedDataset,
    basis: &BasisSpec,
    cov_spec: &CovarianceSpec,
    prior: &PriorSpec,
    proposal_sd: &[f64],
) -> Result<(ParameterState, Vec<bool>)> {
    cov_spec.check_params(&state.cov)?;
    let ctx = Context::new(data, basis, cov_spec)?;
    let mut chain = Chain::new(ctx, prior, state.clone())?;
    if proposal_sd.len() != chain.slots.len() {
        return Err(Error::DimensionMismatch {
            what: "proposal scales",
            expected: chain.slots.len(),
            got: proposal_sd.len(),
        });
    }
    let flags = (0..chain.slots.len())
        .map(|idx| chain.step(rng, idx, proposal_sd[idx]).accepted)
        .collect();
    Ok((chain.state, flags))
}

pub fn run_chain(
    data: &AggregatedDataset,
    basis: &BasisSpec,
    cov_spec: &CovarianceSpec,
    prior: &PriorSpec,
    config: &McmcConfig,
    chain_index: usize,
) -> Result<ChainOutput> {
    let seed = derive_seed(config.seed, chain_index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ctx = Context::new(data, basis, cov_spec)?;
    let init = initial_state(&ctx, prior, chain_index)?;
    let mut chain = Chain::new(ctx, prior, init).map_err(|e| Error::ChainAborted {
        chain: chain_index,
        iteration: 0,
        source: Box::new(e),
    })?;

    let names = mh_scalar_names(cov_spec);
    let mut sds = config.proposal_sd.clone().unwrap_or_else(|| default_scales(cov_spec));
    if sds.len() != names.len() {
        return Err(Error::Config(format!(
            "expected {} proposal scales ({}), got {}",
            names.len(),
            names.join(", "),
            sds.len()
        )));
    }
    let mut adapter = ScaleAdapter::new(TARGET_ACCEPTANCE);
    let mut accepted = vec![0usize; names.len()];
    let mut invalid = vec![0usize; names.len()];
    let mut draws = Vec::with_capacity(config.retained());
    let mut log_posterior = Vec::with_capacity(config.retained());

    for iter in 0..config.n_iter {
        chain.update_beta(&mut rng).map_err(|e| Error::ChainAborted {
            chain: chain_index,
            iteration: iter,
            source: Box::new(e),
        })?;
        let adapting = config.adapt && iter < config.burn_in;
        if adapting {
            adapter.next_iteration();
        }
        for idx in 0..names.len() {
            let out = chain.step(&mut rng, idx, sds[idx]);
            if adapting {
                adapter.adapt(&mut sds[idx], out.accepted);
            }
            if iter >= config.burn_in {
                accepted[idx] += out.accepted as usize;
                invalid[idx] += out.invalid_target as usize;
            }
        }
        if config.keeps(iter) {
            draws.push(chain.state.clone());
            log_posterior.push(chain.log_posterior());
        }
    }

    let post = (config.n_iter - config.burn_in) as f64;
    let acceptance = names
        .into_iter()
        .enumerate()
        .map(|(idx, name)| AcceptanceStat {
            name,
            rate: accepted[idx] as f64 / post,
            invalid: invalid[idx],
            proposal_sd: sds[idx],
        })
        .collect();
    Ok(ChainOutput {
        chain: chain_index,
        seed,
        draws,
        log_posterior,
        acceptance,
        config: config.clone(),
    })
}

/// Runs `config.n_chains` independent chains. Chain `k` uses a seed derived
/// from `config.seed` and `k`, so results do not depend on scheduling.
pub fn run_mcmc(
    data: &AggregatedDataset,
    basis: &BasisSpec,
    cov_spec: &CovarianceSpec,
    prior: &PriorSpec,
    config: &McmcConfig,
) -> Result<Vec<ChainOutput>> {
    config.validate()?;
    validate_dataset(data, cov_spec)?;
    prior.validate(cov_spec, basis.dim())?;
    (0..config.n_chains)
        .into_par_iter()
        .map(|k| run_chain(data, basis, cov_spec, prior, config, k))
        .collect()
}
