//! Simulation harness: true surfaces, exposure and noise generators,
//! replicate execution for both methods, and the comparison metrics.

use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dlm::fit_dlm_surface;
use crate::draws::{Method, SurfaceDraws};
use crate::error::{Error, Result};
use crate::gridio::read_matrix_csv;
use crate::inference::{bfdr_flag, pointwise_probability, simbas};
use crate::model::{
    column_rng, fit_ffr, preprocess, EbOptions, FitOptions, FunctionalDataset, McmcConfig, PreprocessOptions,
};
use crate::wavelet::WaveletSpec;

fn default_value() -> f64 {
    0.2
}
fn default_times() -> usize {
    90
}
fn default_sites() -> usize {
    100
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthKind {
    VerticalBand,
    HorizontalBand,
    Null,
    Custom,
}

/// Configuration of the true coefficient surface. Time and site ranges are
/// 1-based and inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruthSpec {
    VerticalBand {
        #[serde(default = "default_times")]
        times: usize,
        #[serde(default = "default_sites")]
        sites: usize,
        #[serde(default = "default_value")]
        value: f64,
        #[serde(default = "vertical_range")]
        t_range: [usize; 2],
    },
    HorizontalBand {
        #[serde(default = "default_times")]
        times: usize,
        #[serde(default = "default_sites")]
        sites: usize,
        #[serde(default = "default_value")]
        value: f64,
        #[serde(default = "horizontal_range")]
        t_range: [usize; 2],
        #[serde(default = "horizontal_site")]
        site: usize,
    },
    /// Identically zero.
    Null {
        #[serde(default = "default_times")]
        times: usize,
        #[serde(default = "default_sites")]
        sites: usize,
    },
    /// Explicit values, one inner list per time point.
    Custom { values: Vec<Vec<f64>> },
}

fn vertical_range() -> [usize; 2] {
    [40, 44]
}
fn horizontal_range() -> [usize; 2] {
    [1, 45]
}
fn horizontal_site() -> usize {
    50
}

impl TruthSpec {
    pub fn vertical_band() -> Self {
        TruthSpec::VerticalBand {
            times: default_times(),
            sites: default_sites(),
            value: default_value(),
            t_range: vertical_range(),
        }
    }

    pub fn horizontal_band() -> Self {
        TruthSpec::HorizontalBand {
            times: default_times(),
            sites: default_sites(),
            value: default_value(),
            t_range: horizontal_range(),
            site: horizontal_site(),
        }
    }

    /// Signal amplitude used for the signal-to-noise ratio.
    pub fn amplitude(&self) -> Option<f64> {
        match self {
            TruthSpec::VerticalBand { value, .. } | TruthSpec::HorizontalBand { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn build(&self) -> Result<TrueSurface> {
        let in_range = |r: &[usize; 2], len: usize, what: &str| {
            if r[0] == 0 || r[0] > r[1] || r[1] > len {
                Err(Error::Config(format!("{what} range {r:?} invalid for length {len}")))
            } else {
                Ok(())
            }
        };
        let check_dims = |t: usize, s: usize| {
            if t < 2 || s < 2 {
                Err(Error::Config(format!("truth grid {t}x{s} too small")))
            } else {
                Ok(())
            }
        };
        let (kind, times, sites, values) = match self {
            TruthSpec::VerticalBand { times, sites, value, t_range } => {
                check_dims(*times, *sites)?;
                in_range(t_range, *times, "time")?;
                let mut v = vec![0.0; times * sites];
                for t in t_range[0] - 1..t_range[1] {
                    v[t * sites..(t + 1) * sites].fill(*value);
                }
                (TruthKind::VerticalBand, *times, *sites, v)
            }
            TruthSpec::HorizontalBand { times, sites, value, t_range, site } => {
                check_dims(*times, *sites)?;
                in_range(t_range, *times, "time")?;
                in_range(&[*site, *site], *sites, "site")?;
                let mut v = vec![0.0; times * sites];
                for t in t_range[0] - 1..t_range[1] {
                    v[t * sites + site - 1] = *value;
                }
                (TruthKind::HorizontalBand, *times, *sites, v)
            }
            TruthSpec::Null { times, sites } => {
                check_dims(*times, *sites)?;
                (TruthKind::Null, *times, *sites, vec![0.0; times * sites])
            }
            TruthSpec::Custom { values } => {
                let times = values.len();
                let sites = values.first().map_or(0, Vec::len);
                check_dims(times, sites)?;
                if values.iter().any(|r| r.len() != sites) {
                    return Err(Error::Config("custom truth rows differ in length".into()));
                }
                let v: Vec<f64> = values.iter().flatten().copied().collect();
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Config("custom truth has non-finite values".into()));
                }
                (TruthKind::Custom, times, sites, v)
            }
        };
        let signal_mask = values.iter().map(|v| *v != 0.0).collect();
        Ok(TrueSurface { kind, times, sites, values, signal_mask })
    }
}

/// A true surface on the `T x S` grid, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueSurface {
    pub kind: TruthKind,
    pub times: usize,
    pub sites: usize,
    pub values: Vec<f64>,
    pub signal_mask: Vec<bool>,
}

impl TrueSurface {
    pub fn signal_cells(&self) -> usize {
        self.signal_mask.iter().filter(|m| **m).count()
    }

    pub fn as_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.times, self.sites, &self.values)
    }
}

fn default_rho() -> f64 {
    0.5
}

/// Gaussian AR(1) errors along the site axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub sigma2: f64,
    #[serde(default = "default_rho")]
    pub rho_ar1: f64,
}

impl NoiseSpec {
    pub fn new(sigma2: f64) -> Self {
        NoiseSpec { sigma2, rho_ar1: default_rho() }
    }

    /// Signal-to-noise ratio `amplitude / sigma_e`.
    pub fn stnr(&self, amplitude: f64) -> f64 {
        amplitude / self.sigma2.sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Config(format!("noise sigma2 must be positive, got {}", self.sigma2)));
        }
        if !(0.0..1.0).contains(&self.rho_ar1) {
            return Err(Error::Config(format!("rho_ar1 must be in [0, 1), got {}", self.rho_ar1)));
        }
        Ok(())
    }

    /// Fill `out` with one stationary AR(1) sequence.
    pub fn sample_row(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let sd = self.sigma2.sqrt();
        let innov = sd * (1.0 - self.rho_ar1 * self.rho_ar1).sqrt();
        let mut prev = 0.0;
        for (i, v) in out.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            prev = if i == 0 { sd * z } else { self.rho_ar1 * prev + innov * z };
            *v = prev;
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExposureSource {
    /// Rows drawn from an `n0 x T` CSV (header row of time labels).
    ResampleCsv {
        path: PathBuf,
        #[serde(default = "default_true")]
        with_replacement: bool,
    },
    /// Stationary AR(1) profiles floored at `floor`.
    SyntheticAr1 { mean: f64, sd: f64, rho: f64, floor: f64 },
}

impl Default for ExposureSource {
    fn default() -> Self {
        ExposureSource::SyntheticAr1 { mean: 10.0, sd: 5.0, rho: 0.8, floor: 0.1 }
    }
}

/// An exposure source ready to sample from.
#[derive(Debug, Clone)]
pub enum ExposurePool {
    Rows { rows: DMatrix<f64>, with_replacement: bool },
    Synthetic { mean: f64, sd: f64, rho: f64, floor: f64 },
}

impl ExposureSource {
    pub fn load(&self, times: usize) -> Result<ExposurePool> {
        match self {
            ExposureSource::ResampleCsv { path, with_replacement } => {
                let m = read_matrix_csv(path)?;
                if m.values.ncols() != times {
                    return Err(Error::Dimension(format!(
                        "{}: exposure rows have length {}, truth has T={times}",
                        path.display(),
                        m.values.ncols()
                    )));
                }
                if m.values.nrows() == 0 {
                    return Err(Error::InvalidData(format!("{}: no exposure rows", path.display())));
                }
                Ok(ExposurePool::Rows { rows: m.values, with_replacement: *with_replacement })
            }
            ExposureSource::SyntheticAr1 { mean, sd, rho, floor } => {
                if !(sd.is_finite() && *sd >= 0.0 && (0.0..1.0).contains(rho) && mean.is_finite()) {
                    return Err(Error::Config(format!("invalid synthetic exposure {self:?}")));
                }
                Ok(ExposurePool::Synthetic { mean: *mean, sd: *sd, rho: *rho, floor: *floor })
            }
        }
    }
}

impl ExposurePool {
    /// Draw `n x T` exposures.
    pub fn sample(&self, n: usize, times: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
        match self {
            ExposurePool::Rows { rows, with_replacement } => {
                let n0 = rows.nrows();
                if n0 == 0 {
                    return Err(Error::InvalidData("exposure pool has zero rows".into()));
                }
                let picks: Vec<usize> = if *with_replacement {
                    (0..n).map(|_| rng.gen_range(0..n0)).collect()
                } else {
                    if n > n0 {
                        return Err(Error::Config(format!(
                            "cannot draw {n} exposure rows without replacement from {n0}"
                        )));
                    }
                    let mut idx: Vec<usize> = (0..n0).collect();
                    idx.shuffle(rng);
                    idx.truncate(n);
                    idx
                };
                Ok(DMatrix::from_fn(n, times, |i, t| rows[(picks[i], t)]))
            }
            ExposurePool::Synthetic { mean, sd, rho, floor } => {
                let innov = sd * (1.0 - rho * rho).sqrt();
                let mut x = DMatrix::zeros(n, times);
                for i in 0..n {
                    let mut dev = 0.0;
                    for t in 0..times {
                        let z: f64 = rng.sample(StandardNormal);
                        dev = if t == 0 { sd * z } else { rho * dev + innov * z };
                        x[(i, t)] = (mean + dev).max(*floor);
                    }
                }
                Ok(x)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveletChoice {
    pub vanishing_moments: usize,
    pub levels: usize,
}

impl Default for WaveletChoice {
    fn default() -> Self {
        WaveletChoice { vanishing_moments: 4, levels: 6 }
    }
}

impl WaveletChoice {
    pub fn spec(&self, len: usize) -> Result<WaveletSpec> {
        let spec = WaveletSpec::daubechies(self.vanishing_moments, self.levels, len);
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceSpec {
    pub deltas: Vec<f64>,
    pub alpha: f64,
}

impl Default for InferenceSpec {
    fn default() -> Self {
        InferenceSpec { deltas: vec![0.15, 0.10, 0.05], alpha: 0.05 }
    }
}

fn default_n() -> usize {
    400
}
fn default_replicates() -> usize {
    20
}
fn default_methods() -> Vec<Method> {
    vec![Method::Ffr, Method::Dlm]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub truth: TruthSpec,
    pub noise: NoiseSpec,
    #[serde(default)]
    pub exposure: ExposureSource,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Seed for data generation; MCMC seeds are derived from `mcmc.seed`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub t_wavelet: WaveletChoice,
    #[serde(default)]
    pub s_wavelet: WaveletChoice,
    #[serde(default)]
    pub inference: InferenceSpec,
    #[serde(default)]
    pub eb: EbOptions,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
}

impl Scenario {
    /// Defaults with the given truth and error variance.
    pub fn new(name: &str, truth: TruthSpec, sigma2: f64) -> Self {
        Scenario {
            name: name.to_string(),
            truth,
            noise: NoiseSpec::new(sigma2),
            exposure: ExposureSource::default(),
            n: default_n(),
            replicates: default_replicates(),
            seed: 0,
            mcmc: McmcConfig::default(),
            t_wavelet: WaveletChoice::default(),
            s_wavelet: WaveletChoice::default(),
            inference: InferenceSpec::default(),
            eb: EbOptions::default(),
            methods: default_methods(),
        }
    }

    pub fn stnr(&self) -> Option<f64> {
        self.truth.amplitude().map(|a| self.noise.stnr(a))
    }

    pub fn validate(&self) -> Result<TrueSurface> {
        let truth = self.truth.build()?;
        self.noise.validate()?;
        self.mcmc.validate()?;
        if self.n < 3 {
            return Err(Error::Config(format!("n must be at least 3, got {}", self.n)));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods requested".into()));
        }
        let a = self.inference.alpha;
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1), got {a}")));
        }
        if let Some(d) = self.inference.deltas.iter().find(|d| !(**d >= 0.0)) {
            return Err(Error::Config(format!("delta must be non-negative, got {d}")));
        }
        self.t_wavelet.spec(truth.times)?;
        if self.methods.contains(&Method::Ffr) {
            self.s_wavelet.spec(truth.sites)?;
        }
        if let ExposureSource::SyntheticAr1 { .. } = self.exposure {
            self.exposure.load(truth.times)?;
        }
        Ok(truth)
    }
}

/// Generate replicate `r`'s dataset. The same `(scenario.seed, r)` always
/// gives the same data.
pub fn generate_dataset(scenario: &Scenario, replicate: usize) -> Result<(FunctionalDataset, TrueSurface)> {
    let truth = scenario.validate()?;
    let pool = scenario.exposure.load(truth.times)?;
    generate_with_pool(scenario, &truth, &pool, replicate)
}

fn generate_with_pool(
    scenario: &Scenario,
    truth: &TrueSurface,
    pool: &ExposurePool,
    replicate: usize,
) -> Result<(FunctionalDataset, TrueSurface)> {
    let mut rng = column_rng(scenario.seed, replicate as u64);
    let (n, times, sites) = (scenario.n, truth.times, truth.sites);
    let x = pool.sample(n, times, &mut rng)?;
    let mut y = &x * truth.as_matrix();
    let mut row = vec![0.0; sites];
    for i in 0..n {
        scenario.noise.sample_row(&mut rng, &mut row);
        for (s, e) in row.iter().enumerate() {
            y[(i, s)] += e;
        }
    }
    let ds = FunctionalDataset::new(y, x)?;
    Ok((ds, truth.clone()))
}

/// `RMSE(t,s) = sqrt(mean_r (est_r(t,s) - truth(t,s))^2)`.
pub fn rmse_map(estimates: &[Vec<f64>], truth: &[f64]) -> Result<Vec<f64>> {
    if estimates.is_empty() {
        return Err(Error::InvalidData("rmse needs at least one estimate".into()));
    }
    if let Some(e) = estimates.iter().find(|e| e.len() != truth.len()) {
        return Err(Error::Dimension(format!("estimate has {} cells, truth has {}", e.len(), truth.len())));
    }
    let r = estimates.len() as f64;
    Ok((0..truth.len())
        .map(|c| (estimates.iter().map(|e| (e[c] - truth[c]).powi(2)).sum::<f64>() / r).sqrt())
        .collect())
}

/// Sensitivity and FDR of a flag grid against the signal mask.
pub fn detection_rates(flags: &[bool], mask: &[bool]) -> (f64, f64) {
    let signal = mask.iter().filter(|m| **m).count();
    let flagged = flags.iter().filter(|f| **f).count();
    let hits = flags.iter().zip(mask).filter(|(f, m)| **f && **m).count();
    let sens = if signal == 0 { 0.0 } else { hits as f64 / signal as f64 };
    let fdr = (flagged - hits) as f64 / flagged.max(1) as f64;
    (sens, fdr)
}

/// Per-replicate values with their mean and standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Standard error of the mean; absent with a single replicate.
    pub se: Option<f64>,
    pub values: Vec<f64>,
}

impl Summary {
    pub fn new(values: Vec<f64>) -> Self {
        let r = values.len() as f64;
        let mean = values.iter().sum::<f64>() / r;
        let se = (values.len() > 1).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
            (var / r).sqrt()
        });
        Summary { mean, se, values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureMetrics {
    pub sensitivity: Summary,
    pub fdr: Summary,
    pub flagged_fraction: Summary,
    /// Share of replicates flagging each cell, `T x S` row-major.
    #[serde(skip)]
    pub flag_frequency: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BfdrMetrics {
    pub delta: f64,
    #[serde(flatten)]
    pub metrics: ProcedureMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimbasMetrics {
    pub alpha: f64,
    /// Rates from flags computed in each replicate.
    pub per_replicate: ProcedureMetrics,
    /// Rates after averaging the score grid over replicates and flagging
    /// cells whose mean score is at most `alpha`.
    pub averaged_sensitivity: f64,
    pub averaged_fdr: f64,
    #[serde(skip)]
    pub mean_score: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: Method,
    pub total_rmse: f64,
    /// Mean of `|posterior mean|` over signal cells, per replicate.
    pub signal_magnitude: Option<Summary>,
    pub bfdr: Vec<BfdrMetrics>,
    pub simbas: SimbasMetrics,
    #[serde(skip)]
    pub rmse: Vec<f64>,
    /// Posterior-mean surface averaged over replicates.
    #[serde(skip)]
    pub mean_surface: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub truth: TruthKind,
    pub stnr: Option<f64>,
    pub sigma2: f64,
    pub replicates: usize,
    pub n: usize,
    pub times: usize,
    pub sites: usize,
    pub alpha: f64,
    pub deltas: Vec<f64>,
    pub methods: Vec<MethodMetrics>,
    /// `1 - total_rmse(ffr) / total_rmse(dlm)` when both were run.
    pub rmse_reduction: Option<f64>,
    #[serde(skip)]
    pub truth_values: Vec<f64>,
}

impl MetricsReport {
    pub fn method(&self, m: Method) -> Option<&MethodMetrics> {
        self.methods.iter().find(|x| x.method == m)
    }
}

/// What one method produced on one replicate.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: Method,
    pub mean: Vec<f64>,
    pub bfdr_flags: Vec<Vec<bool>>,
    pub simbas: Vec<f64>,
}

/// Seed for replicate `r`, kept apart from neighbouring replicates.
pub fn replicate_seed(base: u64, replicate: usize) -> u64 {
    let mut z = base.wrapping_add((replicate as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Posterior draws of one method on a preprocessed dataset.
pub fn fit_method(
    method: Method,
    dataset: &FunctionalDataset,
    scenario: &Scenario,
    mcmc: &McmcConfig,
) -> Result<SurfaceDraws> {
    let t_spec = scenario.t_wavelet.spec(dataset.times())?;
    let options = FitOptions { eb: scenario.eb, ..Default::default() };
    match method {
        Method::Ffr => {
            let s_spec = scenario.s_wavelet.spec(dataset.sites())?;
            Ok(fit_ffr(dataset, &t_spec, &s_spec, mcmc, &options)?.surface)
        }
        Method::Dlm => Ok(fit_dlm_surface(dataset, &t_spec, mcmc, &options)?.draws.surface),
    }
}

/// Generate, fit and score replicate `r`.
pub fn run_replicate(scenario: &Scenario, pool: &ExposurePool, truth: &TrueSurface, r: usize) -> Result<Vec<MethodOutcome>> {
    let (raw, _) = generate_with_pool(scenario, truth, pool, r)?;
    // centering only keeps the surface in data units
    let (ds, _) = preprocess(&raw, &PreprocessOptions { scale: false, ..Default::default() })?;
    let mcmc = McmcConfig { seed: replicate_seed(scenario.mcmc.seed, r), ..scenario.mcmc };
    scenario
        .methods
        .iter()
        .map(|&method| {
            let draws = fit_method(method, &ds, scenario, &mcmc)?;
            let bfdr_flags = scenario
                .inference
                .deltas
                .iter()
                .map(|&d| Ok(bfdr_flag(&pointwise_probability(&draws, d)?, d, scenario.inference.alpha)?.flags))
                .collect::<Result<Vec<_>>>()?;
            let sb = simbas(&draws, &[])?;
            Ok(MethodOutcome { method, mean: draws.mean(), bfdr_flags, simbas: sb.simbas })
        })
        .collect()
}

/// Run every replicate and reduce, in replicate order, to a report.
pub fn run_replicates(scenario: &Scenario) -> Result<MetricsReport> {
    let truth = scenario.validate()?;
    let pool = scenario.exposure.load(truth.times)?;
    let outcomes: Vec<Vec<MethodOutcome>> = (0..scenario.replicates)
        .into_par_iter()
        .map(|r| {
            run_replicate(scenario, &pool, &truth, r)
                .map_err(|e| Error::Replicate { index: r, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    summarize(scenario, &truth, &outcomes)
}

fn procedure(flags: &[&Vec<bool>], mask: &[bool]) -> ProcedureMetrics {
    let cells = mask.len();
    let mut sens = Vec::new();
    let mut fdr = Vec::new();
    let mut frac = Vec::new();
    let mut freq = vec![0.0; cells];
    for f in flags {
        let (a, b) = detection_rates(f, mask);
        sens.push(a);
        fdr.push(b);
        frac.push(f.iter().filter(|x| **x).count() as f64 / cells as f64);
        for (acc, x) in freq.iter_mut().zip(f.iter()) {
            if *x {
                *acc += 1.0;
            }
        }
    }
    freq.iter_mut().for_each(|v| *v /= flags.len() as f64);
    ProcedureMetrics {
        sensitivity: Summary::new(sens),
        fdr: Summary::new(fdr),
        flagged_fraction: Summary::new(frac),
        flag_frequency: freq,
    }
}

/// Reduce per-replicate outcomes (outer index = replicate) to metrics.
pub fn summarize(scenario: &Scenario, truth: &TrueSurface, outcomes: &[Vec<MethodOutcome>]) -> Result<MetricsReport> {
    let mask = &truth.signal_mask;
    let cells = truth.values.len();
    let alpha = scenario.inference.alpha;
    let mut methods = Vec::new();
    for (k, &method) in scenario.methods.iter().enumerate() {
        let per: Vec<&MethodOutcome> = outcomes.iter().map(|o| &o[k]).collect();
        let means: Vec<Vec<f64>> = per.iter().map(|o| o.mean.clone()).collect();
        let rmse = rmse_map(&means, &truth.values)?;
        let r = per.len() as f64;
        let mut mean_surface = vec![0.0; cells];
        for m in &means {
            for (acc, v) in mean_surface.iter_mut().zip(m) {
                *acc += v / r;
            }
        }
        let signal = truth.signal_cells();
        let signal_magnitude = (signal > 0).then(|| {
            Summary::new(
                means
                    .iter()
                    .map(|m| m.iter().zip(mask).filter(|(_, s)| **s).map(|(v, _)| v.abs()).sum::<f64>() / signal as f64)
                    .collect(),
            )
        });
        let bfdr = scenario
            .inference
            .deltas
            .iter()
            .enumerate()
            .map(|(d, &delta)| {
                let flags: Vec<&Vec<bool>> = per.iter().map(|o| &o.bfdr_flags[d]).collect();
                BfdrMetrics { delta, metrics: procedure(&flags, mask) }
            })
            .collect();
        let sb_flags: Vec<Vec<bool>> =
            per.iter().map(|o| o.simbas.iter().map(|p| *p <= alpha).collect()).collect();
        let refs: Vec<&Vec<bool>> = sb_flags.iter().collect();
        let mut mean_score = vec![0.0; cells];
        for o in &per {
            for (acc, v) in mean_score.iter_mut().zip(&o.simbas) {
                *acc += v / r;
            }
        }
        let avg_flags: Vec<bool> = mean_score.iter().map(|p| *p <= alpha).collect();
        let (averaged_sensitivity, averaged_fdr) = detection_rates(&avg_flags, mask);
        methods.push(MethodMetrics {
            method,
            total_rmse: rmse.iter().sum(),
            signal_magnitude,
            bfdr,
            simbas: SimbasMetrics {
                alpha,
                per_replicate: procedure(&refs, mask),
                averaged_sensitivity,
                averaged_fdr,
                mean_score,
            },
            rmse,
            mean_surface,
        });
    }
    let total = |m: Method| methods.iter().find(|x| x.method == m).map(|x| x.total_rmse);
    let rmse_reduction = match (total(Method::Ffr), total(Method::Dlm)) {
        (Some(f), Some(d)) if d > 0.0 => Some(1.0 - f / d),
        _ => None,
    };
    Ok(MetricsReport {
        scenario: scenario.name.clone(),
        truth: truth.kind,
        stnr: scenario.stnr(),
        sigma2: scenario.noise.sigma2,
        replicates: outcomes.len(),
        n: scenario.n,
        times: truth.times,
        sites: truth.sites,
        alpha,
        deltas: scenario.inference.deltas.clone(),
        methods,
        rmse_reduction,
        truth_values: truth.values.clone(),
    })
}
