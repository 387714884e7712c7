//! Posterior sampling: priors, likelihood, full conditionals, the Gibbs
//! sampler and convergence diagnostics.

pub mod conditional;
pub mod diagnostics;
pub(crate) mod likelihood;
pub mod mh;
pub mod prior;
pub mod sampler;

pub use conditional::{beta_full_conditional, gibbs_update_beta, BetaConditional};
pub use diagnostics::{
    diagnostics, effective_sample_size, potential_scale_reduction, DiagnosticsReport, ParameterDiagnostic,
    PSRF_THRESHOLD,
};
pub use likelihood::log_likelihood;
pub use mh::{mh_update_positive_scalar, mh_update_real_scalar, MhOutcome};
pub use prior::{practical_range_phi_prior, GammaPrior, InvGammaPrior, PriorSpec};
pub use sampler::{
    mh_scalar_names, run_chain, run_mcmc, update_covariance_params, AcceptanceStat, ChainOutput, McmcConfig,
};
