//! Convergence diagnostics across chains: potential scale reduction and
//! effective sample size.

use serde::Serialize;

use super::sampler::{AcceptanceStat, ChainOutput};
use crate::error::{Error, Result};

/// Parameters whose scale reduction exceeds this are flagged.
pub const PSRF_THRESHOLD: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterDiagnostic {
    pub name: String,
    /// Absent with a single chain.
    pub psrf: Option<f64>,
    pub ess: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub n_chains: usize,
    pub draws_per_chain: usize,
    pub max_psrf: Option<f64>,
    pub min_ess: f64,
    /// Names of parameters with scale reduction above the threshold.
    pub flagged: Vec<String>,
    pub parameters: Vec<ParameterDiagnostic>,
    /// Per chain, per Metropolis-Hastings scalar.
    pub acceptance: Vec<Vec<AcceptanceStat>>,
}

fn check_chains(chains: &[Vec<f64>]) -> Result<(usize, usize)> {
    if chains.len() < 2 {
        return Err(Error::InvalidArgument("scale reduction needs at least two chains".into()));
    }
    check_lengths(chains)
}

fn check_lengths(chains: &[Vec<f64>]) -> Result<(usize, usize)> {
    let m = chains.len();
    if m == 0 {
        return Err(Error::InvalidArgument("no chains".into()));
    }
    let n = chains[0].len();
    if n < 2 {
        return Err(Error::InvalidArgument("diagnostics need at least two draws per chain".into()));
    }
    if let Some(bad) = chains.iter().find(|c| c.len() != n) {
        return Err(Error::DimensionMismatch {
            what: "chain length",
            expected: n,
            got: bad.len(),
        });
    }
    Ok((m, n))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Between-chain variance `B` and mean within-chain variance `W`.
fn between_within(chains: &[Vec<f64>]) -> (f64, f64, Vec<f64>) {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let grand = mean(&means);
    let b = if m < 2.0 {
        0.0
    } else {
        n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>()
    };
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    (b, w, means)
}

/// Gelman-Rubin potential scale reduction `sqrt(((n-1)/n W + B/n) / W)`.
///
/// Chains that are all constant at the same value give 1; constant chains
/// at different values give infinity.
pub fn potential_scale_reduction(chains: &[Vec<f64>]) -> Result<f64> {
    let (_, n) = check_chains(chains)?;
    let n = n as f64;
    let (b, w, _) = between_within(chains);
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    Ok((var_plus / w).sqrt())
}

/// Multi-chain effective sample size with Geyer's initial positive
/// sequence estimator.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Result<f64> {
    let (m, n) = check_lengths(chains)?;
    let total = (m * n) as f64;
    let nf = n as f64;
    let (b, w, means) = between_within(chains);
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    if !(var_plus > 0.0) || w == 0.0 {
        return Ok(total);
    }
    // mean over chains of the biased lag-t autocovariance
    let acov = |t: usize| -> f64 {
        chains
            .iter()
            .zip(&means)
            .map(|(c, mu)| {
                c[..n - t]
                    .iter()
                    .zip(&c[t..])
                    .map(|(a, b)| (a - mu) * (b - mu))
                    .sum::<f64>()
                    / nf
            })
            .sum::<f64>()
            / m as f64
    };
    let rho = |t: usize| 1.0 - (w - acov(t)) / var_plus;

    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair <= 0.0 {
            break;
        }
        // enforce a monotone sequence
        if pair > prev {
            pair = prev;
        }
        sum += pair;
        prev = pair;
        t += 2;
    }
    let tau = (-1.0 + 2.0 * sum).max(1.0 / total.log10().max(1.0));
    Ok(total / tau)
}

/// Diagnostics for every scalar parameter over all chains. Scale
/// reduction needs two or more chains and is omitted otherwise.
pub fn diagnostics(chains: &[ChainOutput]) -> Result<DiagnosticsReport> {
    let first = chains
        .first()
        .and_then(|c| c.draws.first())
        .ok_or_else(|| Error::InvalidArgument("chains hold no draws".into()))?;
    let flat: Vec<Vec<Vec<f64>>> = chains
        .iter()
        .map(|c| c.draws.iter().map(|d| d.to_flat()).collect())
        .collect();
    let n = flat[0].len();
    if let Some(bad) = flat.iter().find(|c| c.len() != n) {
        return Err(Error::DimensionMismatch {
            what: "chain length",
            expected: n,
            got: bad.len(),
        });
    }
    let names = first.flat_names();
    let mut parameters = Vec::with_capacity(names.len());
    for (p, name) in names.into_iter().enumerate() {
        let series: Vec<Vec<f64>> = flat.iter().map(|c| c.iter().map(|d| d[p]).collect()).collect();
        let psrf = if chains.len() > 1 {
            Some(potential_scale_reduction(&series)?)
        } else {
            None
        };
        let ess = effective_sample_size(&series)?;
        parameters.push(ParameterDiagnostic {
            name,
            psrf,
            ess,
            flagged: psrf.is_some_and(|r| !(r <= PSRF_THRESHOLD)),
        });
    }
    let max_psrf = parameters
        .iter()
        .filter_map(|p| p.psrf)
        .reduce(|a, b| if b > a || b.is_nan() { b } else { a });
    let min_ess = parameters.iter().map(|p| p.ess).fold(f64::INFINITY, f64::min);
    Ok(DiagnosticsReport {
        n_chains: chains.len(),
        draws_per_chain: n,
        max_psrf,
        min_ess,
        flagged: parameters.iter().filter(|p| p.flagged).map(|p| p.name.clone()).collect(),
        parameters,
        acceptance: chains.iter().map(|c| c.acceptance.clone()).collect(),
    })
}
