//! JSON run configurations. Unknown keys are rejected; relative paths are
//! taken relative to the configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use fofreg::model::{EbOptions, McmcConfig, PreprocessOptions};
use fofreg::sim::WaveletChoice;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{invalid, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// `n x S` outcome CSV with a header row of site labels.
    pub y: Option<PathBuf>,
    /// `n x T` exposure CSV with a header row of time labels.
    pub x: Option<PathBuf>,
    /// Optional `n x q` scalar covariates.
    pub w: Option<PathBuf>,
    /// JSON object mapping covariate labels to "continuous" or "categorical".
    pub w_kinds: Option<PathBuf>,
    /// Outcome holds methylation proportions; convert to M-values.
    pub m_values: bool,
    pub preprocess: PreprocessOptions,
    pub t_wavelet: WaveletChoice,
    pub s_wavelet: WaveletChoice,
    pub mcmc: McmcConfig,
    pub eb: EbOptions,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            y: None,
            x: None,
            w: None,
            w_kinds: None,
            m_values: false,
            preprocess: PreprocessOptions::default(),
            // coarser than the simulation default so short grids work
            t_wavelet: WaveletChoice { vanishing_moments: 4, levels: 3 },
            s_wavelet: WaveletChoice { vanishing_moments: 4, levels: 3 },
            mcmc: McmcConfig::default(),
            eb: EbOptions::default(),
            out: None,
            threads: None,
        }
    }
}

impl FitConfig {
    fn resolve(&mut self, base: &Path) {
        for p in [&mut self.y, &mut self.x, &mut self.w, &mut self.w_kinds, &mut self.out] {
            rebase(p, base);
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferConfig {
    /// Draws manifest, or the directory holding it.
    pub draws: Option<PathBuf>,
    pub deltas: Vec<f64>,
    /// BFDR bound.
    pub alpha: f64,
    /// Levels of the simultaneous bands written to disk.
    pub band_alphas: Vec<f64>,
    /// Report on the raw data scale when the draws carry a scale factor.
    pub raw_scale: bool,
    pub heatmaps: bool,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            draws: None,
            deltas: vec![0.15, 0.10, 0.05],
            alpha: 0.05,
            band_alphas: vec![0.01, 0.05, 0.10],
            raw_scale: true,
            heatmaps: true,
            out: None,
            threads: None,
        }
    }
}

impl InferConfig {
    fn resolve(&mut self, base: &Path) {
        rebase(&mut self.draws, base);
        rebase(&mut self.out, base);
    }

    pub fn validate(&self) -> CliResult<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if let Some(d) = self.deltas.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(invalid(format!("delta must be a non-negative number, got {d}")));
        }
        if let Some(a) = self.band_alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(invalid(format!("band alpha must be in (0, 1), got {a}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    /// Metrics JSON files, or directories holding `metrics.json`.
    pub metrics: Vec<PathBuf>,
    pub heatmaps: Option<bool>,
    pub out: Option<PathBuf>,
}

impl ReportConfig {
    fn resolve(&mut self, base: &Path) {
        for p in &mut self.metrics {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        rebase(&mut self.out, base);
    }
}

fn rebase(path: &mut Option<PathBuf>, base: &Path) {
    if let Some(p) = path {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

fn parse_file<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn base_dir(path: &Path) -> &Path {
    path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."))
}

pub fn load_fit(path: Option<&Path>) -> CliResult<FitConfig> {
    let Some(path) = path else { return Ok(FitConfig::default()) };
    let mut cfg: FitConfig = parse_file(path)?;
    cfg.resolve(base_dir(path));
    Ok(cfg)
}

pub fn load_infer(path: Option<&Path>) -> CliResult<InferConfig> {
    let Some(path) = path else { return Ok(InferConfig::default()) };
    let mut cfg: InferConfig = parse_file(path)?;
    cfg.resolve(base_dir(path));
    Ok(cfg)
}

pub fn load_report(path: Option<&Path>) -> CliResult<ReportConfig> {
    let Some(path) = path else { return Ok(ReportConfig::default()) };
    let mut cfg: ReportConfig = parse_file(path)?;
    cfg.resolve(base_dir(path));
    Ok(cfg)
}

/// Scenario files are plain [`fofreg::sim::Scenario`] JSON; an exposure CSV
/// path inside is taken relative to the scenario file.
pub fn load_scenario(path: &Path) -> CliResult<fofreg::sim::Scenario> {
    let mut scenario: fofreg::sim::Scenario = parse_file(path)?;
    if let fofreg::sim::ExposureSource::ResampleCsv { path: csv, .. } = &mut scenario.exposure {
        if csv.is_relative() {
            *csv = base_dir(path).join(&*csv);
        }
    }
    Ok(scenario)
}
