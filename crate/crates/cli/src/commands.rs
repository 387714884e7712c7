use std::fs;
use std::path::{Path, PathBuf};

use disagg_core::inference::{diagnostics, run_mcmc};
use disagg_core::io::{
    load_dataset, read_draws, write_bands, write_dataset, write_draws, write_json, write_predictive, ResolvedModel,
    RunConfig, Truth,
};
use disagg_core::predictive::predictive_draws;
use disagg_core::simulate::{generate, preset, FitSettings, SimulationScenario};
use disagg_core::summary::{summarize_alpha, summarize_eta};
use disagg_core::{AggregatedDataset, BasisSpec, Error, McmcConfig, ParameterState, Result};

use crate::RunArgs;

/// Number of equally spaced interior knots for scenarios without a preset.
const DEFAULT_KNOTS: usize = 10;

pub fn simulate(config: Option<&Path>, preset_name: Option<&str>, seed: u64, out: &Path) -> Result<()> {
    let (scenario, fit) = match (preset_name, config) {
        (Some(name), _) => {
            let p = preset(name)?;
            (p.scenario, p.fit)
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let scenario: SimulationScenario =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let (lo, hi) = match (scenario.grid.first(), scenario.grid.last()) {
                (Some(&lo), Some(&hi)) => (lo, hi),
                _ => return Err(Error::Config("scenario grid is empty".into())),
            };
            let fit = FitSettings {
                basis: BasisSpec::equally_spaced(DEFAULT_KNOTS, lo, hi)?,
                cov_spec: scenario.cov_spec.clone(),
                mcmc: McmcConfig::default(),
            };
            (scenario, fit)
        }
        (None, None) => return Err(Error::Config("simulate needs --preset or --config".into())),
    };
    let data = generate(&scenario, seed)?;
    fs::create_dir_all(out)?;
    write_dataset(&data, &out.join("data.csv"), &out.join("weights.csv"))?;
    write_json(&out.join("truth.json"), &Truth::new(&scenario, seed)?)?;
    RunConfig::for_simulation(preset_name, &fit).save(&out.join("config.json"))
}

struct Run {
    cfg: RunConfig,
    data: AggregatedDataset,
    model: ResolvedModel,
    out: PathBuf,
}

fn prepare(args: &RunArgs) -> Result<Run> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(p) = &args.preset {
        preset(p)?;
        cfg.preset = Some(p.clone());
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out_dir())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set out in the config".into()))?;
    let data = load_dataset(&cfg.data_path()?, &cfg.weights_path()?)?;
    let mut model = cfg.resolve_model(&data)?;
    if let Some(seed) = args.seed {
        model.mcmc.seed = seed;
    }
    if let Some(n) = args.chains {
        model.mcmc.n_chains = n;
    }
    model.mcmc.validate()?;
    fs::create_dir_all(&out)?;
    Ok(Run { cfg, data, model, out })
}

fn write_summaries(run: &Run, draws: &[ParameterState]) -> Result<()> {
    let grid = run.cfg.summary_grid(&run.model.basis);
    let alpha = summarize_alpha(draws, &run.model.basis, &grid)?;
    write_bands(&run.out.join("summary_alpha.csv"), &alpha, &run.data.labels)?;
    let eta_grid = match &run.model.cov_spec.eta_basis {
        Some(b) => run.cfg.summary_grid(b),
        None => grid,
    };
    let eta = summarize_eta(draws, &run.model.cov_spec, &eta_grid)?;
    write_bands(&run.out.join("summary_eta.csv"), &eta, &run.data.labels)
}

fn load_draws(run: &Run) -> Result<Vec<ParameterState>> {
    let path = run.cfg.draws_path(&run.out);
    let chains = read_draws(&path, &run.model.cov_spec, run.model.basis.dim())?;
    Ok(chains.into_iter().flatten().collect())
}

pub fn fit(args: &RunArgs) -> Result<()> {
    let run = prepare(args)?;
    let m = &run.model;
    let chains = run_mcmc(&run.data, &m.basis, &m.cov_spec, &m.prior, &m.mcmc)?;
    write_draws(&run.out.join("draws.csv"), &chains)?;
    write_json(&run.out.join("diagnostics.json"), &diagnostics(&chains)?)?;
    let draws: Vec<ParameterState> = chains.into_iter().flat_map(|c| c.draws).collect();
    write_summaries(&run, &draws)
}

pub fn summarize(args: &RunArgs) -> Result<()> {
    let run = prepare(args)?;
    let draws = load_draws(&run)?;
    write_summaries(&run, &draws)
}

pub fn predict(args: &RunArgs) -> Result<()> {
    let run = prepare(args)?;
    let draws = load_draws(&run)?;
    let request = run.cfg.prediction_request(&run.data, &run.model.basis)?;
    let m = &run.model;
    let out = predictive_draws(&request, &draws, &run.data, &m.basis, &m.cov_spec, m.mcmc.seed)?;
    write_predictive(&run.out.join("predictive.csv"), &out)
}
