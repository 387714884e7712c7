//! Run configuration, dataset files and result files.
//!
//! Observations are long-format CSV `curve_id,replicate_id,t,y`; weights are
//! `curve_id,category,r,c_weight` with an empty `c_weight` meaning "same as
//! `r`". Every numeric output field is written with 17 significant digits.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::inference::{ChainOutput, GammaPrior, InvGammaPrior, McmcConfig, PriorSpec};
use crate::model::{AggregatedDataset, CovarianceKind, CovarianceSpec, ParameterState};
use crate::predictive::{PredictiveOutput, PredictiveRequest};
use crate::simulate::{preset, FitSettings, SimulationScenario};
use crate::summary::{linspace, CurveBand, DEFAULT_SUMMARY_POINTS};

/// Formats a float so that it parses back to the same value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Mean or eta basis as given in a config file: explicit interior knots or
/// a count of equally spaced ones. The domain defaults to the data grid
/// range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BasisConfig {
    Knots {
        interior_knots: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain: Option<[f64; 2]>,
    },
    Count {
        num_interior_knots: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain: Option<[f64; 2]>,
    },
}

impl BasisConfig {
    pub fn resolve(&self, grid: &[f64]) -> Result<BasisSpec> {
        let span = || -> Result<[f64; 2]> {
            match (grid.first(), grid.last()) {
                (Some(&lo), Some(&hi)) => Ok([lo, hi]),
                _ => Err(Error::Config("basis domain missing and the grid is empty".into())),
            }
        };
        match self {
            BasisConfig::Knots { interior_knots, domain } => {
                let [lo, hi] = domain.map_or_else(span, Ok)?;
                BasisSpec::new(interior_knots.clone(), lo, hi)
            }
            BasisConfig::Count {
                num_interior_knots,
                domain,
            } => {
                let [lo, hi] = domain.map_or_else(span, Ok)?;
                BasisSpec::equally_spaced(*num_interior_knots, lo, hi)
            }
        }
    }

    fn from_spec(b: &BasisSpec) -> Self {
        let (lo, hi) = b.domain();
        BasisConfig::Knots {
            interior_knots: b.interior_knots().to_vec(),
            domain: Some([lo, hi]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceConfig {
    pub kind: CovarianceKind,
    /// Basis for the standard-deviation curves; the mean basis when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_basis: Option<BasisConfig>,
}

/// Overrides of the default priors. Scalars apply to every coefficient or
/// category.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_var: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<InvGammaPrior>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<GammaPrior>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_var: Option<f64>,
}

impl PriorConfig {
    pub fn resolve(&self, spec: &CovarianceSpec, basis: &BasisSpec) -> Result<PriorSpec> {
        let (lo, hi) = basis.domain();
        let mut p = PriorSpec::default_for(spec, basis.dim(), hi - lo)?;
        if let Some(m) = self.beta_mean {
            p.beta_mean.fill(m);
        }
        if let Some(v) = self.beta_var {
            p.beta_var.fill(v);
        }
        if let Some(s) = self.sigma2 {
            p.sigma2.iter_mut().for_each(|x| *x = s);
        }
        if let Some(s) = self.phi {
            p.phi.iter_mut().for_each(|x| *x = s);
        }
        if let (Some(m), Some(tm)) = (self.theta_mean, p.theta_mean.as_mut()) {
            tm.fill(m);
        }
        if let (Some(v), Some(tv)) = (self.theta_var, p.theta_var.as_mut()) {
            tv.fill(v);
        }
        p.validate(spec, basis.dim())?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionConfig {
    /// Curve id as it appears in the data file.
    pub curve: String,
    /// Points to predict at; `num_points` equally spaced over the basis
    /// domain when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_points: Option<usize>,
    #[serde(default = "yes")]
    pub include_noise: bool,
}

fn yes() -> bool {
    true
}

/// Single-file run description. Relative paths resolve against the
/// directory holding the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Name of a preset whose model settings fill any field left out here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<BasisConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<CovarianceConfig>,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcmc: Option<McmcConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<PredictionConfig>,
    /// Points in the summary grid; default 200 over the basis domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary_points: Option<usize>,
    /// Draws file read by `summarize` and `predict`; `<out>/draws.csv`
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Model settings resolved against a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedModel {
    pub basis: BasisSpec,
    pub cov_spec: CovarianceSpec,
    pub prior: PriorSpec,
    pub mcmc: McmcConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if let Some(name) = &cfg.preset {
            preset(name)?;
        }
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn data_path(&self) -> Result<PathBuf> {
        self.data
            .as_deref()
            .map(|p| self.resolve_path(p))
            .ok_or_else(|| Error::Config("config has no data path".into()))
    }

    pub fn weights_path(&self) -> Result<PathBuf> {
        self.weights
            .as_deref()
            .map(|p| self.resolve_path(p))
            .ok_or_else(|| Error::Config("config has no weights path".into()))
    }

    pub fn out_dir(&self) -> Option<PathBuf> {
        self.out.as_deref().map(|p| self.resolve_path(p))
    }

    pub fn draws_path(&self, out: &Path) -> PathBuf {
        self.draws
            .as_deref()
            .map_or_else(|| out.join("draws.csv"), |p| self.resolve_path(p))
    }

    fn preset_fit(&self) -> Result<Option<FitSettings>> {
        self.preset.as_deref().map(|n| preset(n).map(|p| p.fit)).transpose()
    }

    /// Basis, covariance structure, priors and sampler settings for
    /// `data`, taking preset values for anything not given.
    pub fn resolve_model(&self, data: &AggregatedDataset) -> Result<ResolvedModel> {
        let fit = self.preset_fit()?;
        let basis = match (&self.basis, &fit) {
            (Some(b), _) => b.resolve(&data.grid)?,
            (None, Some(f)) => f.basis.clone(),
            (None, None) => return Err(Error::Config("config needs a basis or a preset".into())),
        };
        let c = data.num_categories();
        let cov_spec = match (&self.covariance, &fit) {
            (Some(cc), _) => match cc.kind {
                CovarianceKind::UniformlyHomogeneous => CovarianceSpec::uniformly_homogeneous(c),
                CovarianceKind::Homogeneous => CovarianceSpec::homogeneous(c),
                CovarianceKind::Heterogeneous => {
                    let eta = match &cc.eta_basis {
                        Some(b) => b.resolve(&data.grid)?,
                        None => basis.clone(),
                    };
                    CovarianceSpec::heterogeneous(c, eta)
                }
            },
            (None, Some(f)) => CovarianceSpec {
                num_categories: c,
                ..f.cov_spec.clone()
            },
            (None, None) => return Err(Error::Config("config needs a covariance kind or a preset".into())),
        };
        let mcmc = match (&self.mcmc, &fit) {
            (Some(m), _) => m.clone(),
            (None, Some(f)) => f.mcmc.clone(),
            (None, None) => McmcConfig::default(),
        };
        mcmc.validate()?;
        let prior = self.prior.resolve(&cov_spec, &basis)?;
        Ok(ResolvedModel {
            basis,
            cov_spec,
            prior,
            mcmc,
        })
    }

    pub fn summary_grid(&self, basis: &BasisSpec) -> Vec<f64> {
        let (lo, hi) = basis.domain();
        linspace(lo, hi, self.summary_points.unwrap_or(DEFAULT_SUMMARY_POINTS))
    }

    /// Prediction request with the curve id mapped to its index.
    pub fn prediction_request(&self, data: &AggregatedDataset, basis: &BasisSpec) -> Result<PredictiveRequest> {
        let p = self
            .prediction
            .as_ref()
            .ok_or_else(|| Error::Config("config has no prediction section".into()))?;
        let curve = data
            .curve_ids
            .iter()
            .position(|id| *id == p.curve)
            .ok_or_else(|| Error::Config(format!("prediction curve {:?} not in data", p.curve)))?;
        let new_grid = match &p.new_grid {
            Some(g) => g.clone(),
            None => {
                let (lo, hi) = basis.domain();
                linspace(lo, hi, p.num_points.unwrap_or(DEFAULT_SUMMARY_POINTS))
            }
        };
        Ok(PredictiveRequest {
            curve,
            new_grid,
            include_noise: p.include_noise,
        })
    }

    /// Config pointing at simulated files with the model settings spelled
    /// out.
    pub fn for_simulation(preset_name: Option<&str>, fit: &FitSettings) -> Self {
        let eta_basis = fit.cov_spec.eta_basis.as_ref().map(BasisConfig::from_spec);
        Self {
            preset: preset_name.map(str::to_string),
            data: Some("data.csv".into()),
            weights: Some("weights.csv".into()),
            out: Some("fit".into()),
            basis: Some(BasisConfig::from_spec(&fit.basis)),
            covariance: Some(CovarianceConfig {
                kind: fit.cov_spec.kind,
                eta_basis,
            }),
            mcmc: Some(fit.mcmc.clone()),
            prediction: Some(PredictionConfig {
                curve: "1".into(),
                new_grid: None,
                num_points: None,
                include_noise: true,
            }),
            ..Self::default()
        }
    }
}

#[derive(Debug, Deserialize)]
struct ObsRecord {
    curve_id: String,
    replicate_id: String,
    t: f64,
    y: f64,
}

#[derive(Debug, Deserialize)]
struct WeightRecord {
    curve_id: String,
    category: String,
    r: f64,
    c_weight: Option<f64>,
}

/// Line number of a record (header is line 1).
fn line_of(pos: Option<&csv::Position>, fallback: usize) -> usize {
    pos.map_or(fallback, |p| p.line() as usize)
}

fn parse_err(path: &Path, line: usize, message: impl std::fmt::Display) -> Error {
    Error::Parse {
        line,
        message: format!("{}: {message}", path.display()),
    }
}

fn index_of(ids: &mut Vec<String>, lookup: &mut HashMap<String, usize>, id: &str) -> usize {
    if let Some(&i) = lookup.get(id) {
        return i;
    }
    ids.push(id.to_string());
    lookup.insert(id.to_string(), ids.len() - 1);
    ids.len() - 1
}

/// Reads observations and weights. Curves, replicates and categories keep
/// the order of first appearance; the grid is the sorted set of `t`.
pub fn load_dataset(data_path: &Path, weights_path: &Path) -> Result<AggregatedDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(data_path)?;
    let mut curve_ids = Vec::new();
    let mut curve_lookup = HashMap::new();
    let mut reps: Vec<(Vec<String>, HashMap<String, usize>)> = Vec::new();
    // (curve, replicate, t bits) -> (value, line)
    let mut cells: HashMap<(usize, usize, u64), (f64, usize)> = HashMap::new();
    let mut first_line: HashMap<(usize, usize), usize> = HashMap::new();
    let mut ts: Vec<f64> = Vec::new();
    for (n, rec) in rdr.deserialize::<ObsRecord>().enumerate() {
        let rec = rec.map_err(|e| parse_err(data_path, line_of(e.position(), n + 2), &e))?;
        let line = n + 2;
        if !rec.t.is_finite() || !rec.y.is_finite() {
            return Err(parse_err(data_path, line, "non-finite t or y"));
        }
        let i = index_of(&mut curve_ids, &mut curve_lookup, &rec.curve_id);
        if reps.len() <= i {
            reps.push((Vec::new(), HashMap::new()));
        }
        let (ids, lookup) = &mut reps[i];
        let j = index_of(ids, lookup, &rec.replicate_id);
        let t = if rec.t == 0.0 { 0.0 } else { rec.t };
        if cells.insert((i, j, t.to_bits()), (rec.y, line)).is_some() {
            return Err(parse_err(
                data_path,
                line,
                format!(
                    "duplicate observation for curve {:?}, replicate {:?}, t = {}",
                    rec.curve_id, rec.replicate_id, rec.t
                ),
            ));
        }
        first_line.entry((i, j)).or_insert(line);
        ts.push(t);
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let grid = ts;
    let num_rep = reps.first().map_or(0, |r| r.0.len());
    if let Some(i) = reps.iter().position(|r| r.0.len() != num_rep) {
        let line = first_line[&(i, 0)];
        return Err(parse_err(
            data_path,
            line,
            format!(
                "curve {:?} has {} replicates, expected {num_rep}",
                curve_ids[i],
                reps[i].0.len()
            ),
        ));
    }
    let mut y = Vec::with_capacity(curve_ids.len());
    for (i, (rep_ids, _)) in reps.iter().enumerate() {
        let mut m = DMatrix::zeros(grid.len(), num_rep);
        for j in 0..num_rep {
            for (k, &t) in grid.iter().enumerate() {
                match cells.get(&(i, j, t.to_bits())) {
                    Some(&(v, _)) => m[(k, j)] = v,
                    None => {
                        return Err(parse_err(
                            data_path,
                            first_line[&(i, j)],
                            format!(
                                "ragged grid: curve {:?}, replicate {:?} has no value at t = {t}",
                                curve_ids[i], rep_ids[j]
                            ),
                        ))
                    }
                }
            }
        }
        y.push(m);
    }

    let mut wrdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(weights_path)?;
    let mut labels = Vec::new();
    let mut label_lookup = HashMap::new();
    let mut entries: HashMap<(usize, usize), (f64, f64)> = HashMap::new();
    for (n, rec) in wrdr.deserialize::<WeightRecord>().enumerate() {
        let rec = rec.map_err(|e| parse_err(weights_path, line_of(e.position(), n + 2), &e))?;
        let line = n + 2;
        let i = *curve_lookup
            .get(&rec.curve_id)
            .ok_or_else(|| parse_err(weights_path, line, format!("unknown curve {:?}", rec.curve_id)))?;
        let c = index_of(&mut labels, &mut label_lookup, &rec.category);
        let cw = rec.c_weight.unwrap_or(rec.r);
        if !rec.r.is_finite() || !cw.is_finite() {
            return Err(parse_err(weights_path, line, "non-finite weight"));
        }
        if entries.insert((i, c), (rec.r, cw)).is_some() {
            return Err(parse_err(
                weights_path,
                line,
                format!("duplicate weight for curve {:?}, category {:?}", rec.curve_id, rec.category),
            ));
        }
    }
    let num_curves = curve_ids.len();
    let num_cat = labels.len();
    let mut r = DMatrix::zeros(num_curves, num_cat);
    let mut cw = DMatrix::zeros(num_curves, num_cat);
    for i in 0..num_curves {
        for c in 0..num_cat {
            let &(rv, cv) = entries.get(&(i, c)).ok_or_else(|| {
                Error::Data(format!(
                    "{}: missing weight for curve {:?}, category {:?}",
                    weights_path.display(),
                    curve_ids[i],
                    labels[c]
                ))
            })?;
            r[(i, c)] = rv;
            cw[(i, c)] = cv;
        }
    }
    Ok(AggregatedDataset {
        grid,
        y,
        r,
        c_weights: cw,
        curve_ids,
        labels,
    })
}

/// Writes a dataset in the format read by [`load_dataset`]. Replicates are
/// numbered from 1.
pub fn write_dataset(data: &AggregatedDataset, data_path: &Path, weights_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(data_path)?;
    w.write_record(["curve_id", "replicate_id", "t", "y"])?;
    for (i, y) in data.y.iter().enumerate() {
        for j in 0..y.ncols() {
            let rep = (j + 1).to_string();
            for (k, &t) in data.grid.iter().enumerate() {
                w.write_record([data.curve_ids[i].as_str(), &rep, &fmt_f64(t), &fmt_f64(y[(k, j)])])?;
            }
        }
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(weights_path)?;
    w.write_record(["curve_id", "category", "r", "c_weight"])?;
    for i in 0..data.num_curves() {
        for c in 0..data.num_categories() {
            w.write_record([
                data.curve_ids[i].as_str(),
                data.labels[c].as_str(),
                &fmt_f64(data.r[(i, c)]),
                &fmt_f64(data.c_weights[(i, c)]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes retained draws, one row per draw, with 1-based `chain` and
/// `draw` columns followed by every parameter.
pub fn write_draws(path: &Path, chains: &[ChainOutput]) -> Result<()> {
    let first = chains
        .iter()
        .find_map(|c| c.draws.first())
        .ok_or_else(|| Error::InvalidArgument("no draws to write".into()))?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["chain".to_string(), "draw".to_string()];
    header.extend(first.flat_names());
    w.write_record(&header)?;
    for chain in chains {
        for (d, state) in chain.draws.iter().enumerate() {
            let mut row = vec![(chain.chain + 1).to_string(), (d + 1).to_string()];
            row.extend(state.to_flat().into_iter().map(fmt_f64));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a draws file back, grouped by chain in file order.
pub fn read_draws(path: &Path, spec: &CovarianceSpec, num_coef: usize) -> Result<Vec<Vec<ParameterState>>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let expected: Vec<String> = ["chain", "draw"]
        .iter()
        .map(|s| s.to_string())
        .chain(crate::model::parameter_names(spec, num_coef))
        .collect();
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != expected {
        return Err(parse_err(path, 1, "columns do not match the configured model"));
    }
    let mut chains: Vec<Vec<ParameterState>> = Vec::new();
    let mut chain_ids: Vec<String> = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let line = n + 2;
        let rec = rec.map_err(|e| parse_err(path, line, &e))?;
        let values = rec
            .iter()
            .skip(2)
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(path, line, &e))?;
        let state = ParameterState::from_flat(spec, num_coef, &values)?;
        let id = rec.get(0).unwrap_or_default();
        match chain_ids.iter().position(|c| c == id) {
            Some(k) => chains[k].push(state),
            None => {
                chain_ids.push(id.to_string());
                chains.push(vec![state]);
            }
        }
    }
    if chains.is_empty() {
        return Err(parse_err(path, 1, "no draws"));
    }
    Ok(chains)
}

/// Writes `category,t,post_mean,q025,q975`, naming categories by `labels`.
pub fn write_bands(path: &Path, bands: &[CurveBand], labels: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["category", "t", "post_mean", "q025", "q975"])?;
    for b in bands {
        let label = labels.get(b.category).cloned().unwrap_or_else(|| (b.category + 1).to_string());
        for k in 0..b.grid.len() {
            w.write_record([
                label.clone(),
                fmt_f64(b.grid[k]),
                fmt_f64(b.post_mean[k]),
                fmt_f64(b.q025[k]),
                fmt_f64(b.q975[k]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the pointwise predictive summary `t,post_mean,q025,q975`.
pub fn write_predictive(path: &Path, out: &PredictiveOutput) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "post_mean", "q025", "q975"])?;
    for k in 0..out.grid.len() {
        w.write_record([fmt_f64(out.grid[k]), fmt_f64(out.mean[k]), fmt_f64(out.q025[k]), fmt_f64(out.q975[k])])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Known truth of a simulated dataset, evaluated on its grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub seed: u64,
    pub scenario: SimulationScenario,
    pub grid: Vec<f64>,
    /// `alpha[c]` on `grid`.
    pub alpha: Vec<Vec<f64>>,
    /// `eta[c]` on `grid`.
    pub eta: Vec<Vec<f64>>,
}

impl Truth {
    pub fn new(scenario: &SimulationScenario, seed: u64) -> Result<Self> {
        let grid = scenario.grid.clone();
        let c = scenario.num_categories();
        Ok(Self {
            seed,
            alpha: (0..c).map(|k| scenario.alpha.values(k, &grid)).collect::<Result<_>>()?,
            eta: (0..c).map(|k| scenario.eta_values(k, &grid)).collect::<Result<_>>()?,
            scenario: scenario.clone(),
            grid,
        })
    }
}
