//! Site-by-site distributed-lag baseline.
//!
//! Each outcome site is regressed on the wavelet-transformed exposure with
//! the same spike-and-slab sampler the joint model uses, but with no
//! outcome-side transform and no pooling: hyperparameters are estimated
//! from the site alone. Stacking the lag curves gives a surface directly
//! comparable to the joint fit.

use nalgebra::DMatrix;

use crate::draws::{fnv1a, Method, PosteriorDraws, SurfaceDraws};
use crate::error::{Error, Result};
use crate::model::{
    require_zero_pad, run_columns, ColumnPlan, Design, FitOptions, FunctionalDataset, McmcConfig,
    OutcomeBasis,
};
use crate::wavelet::{build_operator, dwt_rows, WaveletSpec};

/// Stacked lag-curve draws for every site.
#[derive(Debug, Clone)]
pub struct DlmFit {
    pub draws: PosteriorDraws,
}

impl DlmFit {
    pub fn surface(&self) -> &SurfaceDraws {
        &self.draws.surface
    }

    /// Lag curve of site `s` in draw `m`.
    pub fn site_curve(&self, s: usize, m: usize) -> Vec<f64> {
        let surf = &self.draws.surface;
        (0..surf.rows()).map(|t| surf.get(m, t, s)).collect()
    }
}

fn check_spec(dataset: &FunctionalDataset, t_spec: &WaveletSpec) -> Result<()> {
    require_zero_pad(t_spec, "exposure")?;
    if t_spec.original_length != dataset.times() {
        return Err(Error::Dimension(format!(
            "exposure wavelet covers T={}, data has T={}",
            t_spec.original_length,
            dataset.times()
        )));
    }
    Ok(())
}

fn fit_sites(
    dataset: &FunctionalDataset,
    t_spec: &WaveletSpec,
    mcmc: &McmcConfig,
    options: &FitOptions,
    streams: Vec<u64>,
) -> Result<DlmFit> {
    mcmc.validate()?;
    check_spec(dataset, t_spec)?;
    let phi = build_operator(*t_spec)?;
    let design = Design::new(dwt_rows(&dataset.x, &phi)?, dataset.w.clone())?;
    let sites = dataset.sites();
    let plan = ColumnPlan {
        phi: &phi,
        outcome: OutcomeBasis::Identity,
        ystar: dataset.y.clone(),
        group_of: (0..sites).collect(),
        groups: sites,
        streams,
        labels: dataset.s_labels.iter().map(|l| format!("site {l}")).collect(),
        sites,
    };
    let draws = run_columns(dataset, &design, &plan, mcmc, options, Method::Dlm, None)?;
    Ok(DlmFit { draws })
}

/// Fit one site's lag curve. Returns `M x T` draws, draw-major.
pub fn fit_dlm_site(
    y_col: &[f64],
    x: &DMatrix<f64>,
    t_spec: &WaveletSpec,
    mcmc: &McmcConfig,
    stream: u64,
) -> Result<Vec<f64>> {
    let n = x.nrows();
    if y_col.len() != n {
        return Err(Error::Dimension(format!(
            "site response has length {}, exposure has {n} rows",
            y_col.len()
        )));
    }
    // Duplicate the column so the dataset passes the S >= 2 check; only
    // the first column is fit.
    let y = DMatrix::from_fn(n, 2, |i, _| y_col[i]);
    let mut ds = FunctionalDataset::new(y, x.clone())?;
    ds.y = DMatrix::from_column_slice(n, 1, y_col);
    ds.s_labels.truncate(1);
    let fit = fit_sites(&ds, t_spec, mcmc, &FitOptions::default(), vec![stream])?;
    Ok(fit.draws.surface.as_slice().to_vec())
}

/// RNG stream of a site, keyed by its label so that reordering sites
/// reorders the surface and nothing else.
pub fn site_stream(label: &str) -> u64 {
    fnv1a(label.as_bytes())
}

/// Fit every site independently, each on the stream of its label.
pub fn fit_dlm_surface(
    dataset: &FunctionalDataset,
    t_spec: &WaveletSpec,
    mcmc: &McmcConfig,
    options: &FitOptions,
) -> Result<DlmFit> {
    dataset.validate()?;
    let streams = dataset.s_labels.iter().map(|l| site_stream(l)).collect();
    fit_sites(dataset, t_spec, mcmc, options, streams)
}
