//! Wavelet-space function-on-function regression.
//!
//! Both the exposure rows and the outcome rows are moved to the wavelet
//! domain, each outcome coefficient column is fit by its own spike-and-slab
//! regression on the exposure coefficients, and every retained draw is
//! projected back to the `T x S` grid.

mod dataset;
mod hyper;
mod sampler;

pub use dataset::{preprocess, CovariateKind, FunctionalDataset, PreprocessOptions, PreprocessReport};
pub use hyper::{estimate_hyperparameters, EbMethod, EbOptions};
pub use sampler::{
    column_rng, fit_column, ColumnDraws, Design, McmcConfig, RidgeFit, SamplerOptions, SpikeSlabHyper,
    COVARIATE_PRIOR_VARIANCE, RIDGE_FACTOR,
};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::draws::{fnv1a, Method, PosteriorDraws, Provenance, SurfaceDraws, WaveletDraws};
use crate::error::{Error, Result};
use crate::wavelet::{build_operator, dwt_rows, Boundary, SurfaceProjector, WaveletOperator, WaveletSpec};

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// Use these hyperparameters instead of estimating them.
    pub hyper_override: Option<SpikeSlabHyper>,
    /// Also keep the wavelet-space draws.
    pub keep_wavelet: bool,
    pub eb: EbOptions,
}

/// How outcome rows are represented before column-wise fitting.
#[derive(Debug, Clone, Copy)]
pub enum OutcomeBasis<'a> {
    Wavelet(&'a WaveletOperator),
    /// Columns are fit as observed.
    Identity,
}

/// Everything the column engine needs besides the data.
pub(crate) struct ColumnPlan<'a> {
    pub phi: &'a WaveletOperator,
    pub outcome: OutcomeBasis<'a>,
    /// Outcome columns in the fitting basis, `n x S*`.
    pub ystar: DMatrix<f64>,
    pub group_of: Vec<usize>,
    pub groups: usize,
    pub streams: Vec<u64>,
    pub labels: Vec<String>,
    pub sites: usize,
}

#[derive(Serialize)]
struct ConfigFingerprint<'a> {
    method: Method,
    t_wavelet: &'a WaveletSpec,
    s_wavelet: Option<&'a WaveletSpec>,
    mcmc: &'a McmcConfig,
    eb: &'a EbOptions,
    hyper_override: bool,
    n: usize,
    covariates: usize,
}

pub(crate) fn require_zero_pad(spec: &WaveletSpec, axis: &str) -> Result<()> {
    if spec.boundary != Boundary::ZeroPad {
        return Err(Error::Config(format!(
            "{axis} wavelet must use zero padding for the regression model, got {:?}",
            spec.boundary
        )));
    }
    Ok(())
}

/// Fit the wavelet-space regression of `Y` on `X` (and `W`).
///
/// The dataset should already be preprocessed; draws are on its scale.
pub fn fit_ffr(
    dataset: &FunctionalDataset,
    t_spec: &WaveletSpec,
    s_spec: &WaveletSpec,
    mcmc: &McmcConfig,
    options: &FitOptions,
) -> Result<PosteriorDraws> {
    dataset.validate()?;
    mcmc.validate()?;
    require_zero_pad(t_spec, "exposure")?;
    require_zero_pad(s_spec, "outcome")?;
    if t_spec.original_length != dataset.times() || s_spec.original_length != dataset.sites() {
        return Err(Error::Dimension(format!(
            "wavelet specs cover T={} and S={}, data has T={} and S={}",
            t_spec.original_length,
            s_spec.original_length,
            dataset.times(),
            dataset.sites()
        )));
    }
    let phi = build_operator(*t_spec)?;
    let omega = build_operator(*s_spec)?;
    let xstar = dwt_rows(&dataset.x, &phi)?;
    let ystar = dwt_rows(&dataset.y, &omega)?;
    let design = Design::new(xstar, dataset.w.clone())?;
    let group_of = omega.level_map();
    let labels = (0..omega.padded_length())
        .map(|f| {
            let idx = omega.index(f);
            match idx.band {
                crate::wavelet::Band::Scaling => format!("(scaling, k={})", idx.k),
                crate::wavelet::Band::Detail(j) => format!("(j={j}, k={})", idx.k),
            }
        })
        .collect();
    let plan = ColumnPlan {
        phi: &phi,
        outcome: OutcomeBasis::Wavelet(&omega),
        streams: (0..omega.padded_length() as u64).collect(),
        ystar,
        group_of,
        groups: s_spec.levels + 1,
        labels,
        sites: dataset.sites(),
    };
    run_columns(dataset, &design, &plan, mcmc, options, Method::Ffr, Some(s_spec))
}

/// Shared engine: estimate hyperparameters, fit every column on its own
/// stream, and project draws to the data grid.
pub(crate) fn run_columns(
    dataset: &FunctionalDataset,
    design: &Design,
    plan: &ColumnPlan<'_>,
    mcmc: &McmcConfig,
    options: &FitOptions,
    method: Method,
    s_spec: Option<&WaveletSpec>,
) -> Result<PosteriorDraws> {
    let hyper = match &options.hyper_override {
        Some(h) => {
            h.validate()?;
            if h.coefficients != design.coefficients() || h.groups < plan.groups {
                return Err(Error::Config(format!(
                    "hyperparameter override is {}x{}, model needs {}x{}",
                    h.coefficients,
                    h.groups,
                    design.coefficients(),
                    plan.groups
                )));
            }
            h.clone()
        }
        None => estimate_hyperparameters(design, &plan.ystar, &plan.group_of, plan.groups, &options.eb)?,
    };

    let columns: Vec<ColumnDraws> = (0..plan.ystar.ncols())
        .into_par_iter()
        .map(|c| {
            fit_column(
                plan.ystar.column(c).as_slice(),
                design,
                &hyper,
                plan.group_of[c],
                mcmc,
                plan.streams[c],
                SamplerOptions::default(),
                &plan.labels[c],
            )
        })
        .collect::<Result<Vec<_>>>()?;

    assemble(dataset, plan, &columns, mcmc, options, method, s_spec)
}

fn assemble(
    dataset: &FunctionalDataset,
    plan: &ColumnPlan<'_>,
    columns: &[ColumnDraws],
    mcmc: &McmcConfig,
    options: &FitOptions,
    method: Method,
    s_spec: Option<&WaveletSpec>,
) -> Result<PosteriorDraws> {
    let m_draws = mcmc.retained();
    let tp = plan.phi.padded_length();
    let sp = columns.len();
    let (t, s) = (plan.phi.original_length(), plan.sites);
    let q = dataset.covariates();

    let gather = |m: usize, buf: &mut [f64]| {
        for (c, col) in columns.iter().enumerate() {
            buf[c * tp..(c + 1) * tp].copy_from_slice(col.beta_draw(m));
        }
    };

    let mut surface = SurfaceDraws::zeros(m_draws, t, s);
    surface
        .as_mut_slice()
        .par_chunks_mut(t * s)
        .enumerate()
        .for_each_init(
            || (Projector::new(plan.phi, plan.outcome, s), vec![0.0; tp * sp]),
            |(projector, buf), (m, out)| {
                gather(m, buf);
                projector.project(buf, out);
            },
        );

    let wavelet = options.keep_wavelet.then(|| {
        let mut data = vec![0.0; m_draws * tp * sp];
        for (m, chunk) in data.chunks_exact_mut(tp * sp).enumerate() {
            gather(m, chunk);
        }
        WaveletDraws { draws: m_draws, t_coefficients: tp, s_coefficients: sp, data }
    });

    let mut sigma2 = vec![0.0; m_draws * sp];
    for (c, col) in columns.iter().enumerate() {
        for m in 0..m_draws {
            sigma2[m * sp + c] = col.sigma2[m];
        }
    }
    let mut inclusion = Vec::with_capacity(tp * sp);
    for col in columns {
        inclusion.extend(col.inclusion_frequency());
    }

    let mut covariate_curves = vec![0.0; m_draws * q * s];
    if q > 0 {
        let mut row = vec![0.0; sp];
        let mut scratch = vec![0.0; sp];
        for m in 0..m_draws {
            for a in 0..q {
                for (c, col) in columns.iter().enumerate() {
                    row[c] = col.theta_draw(m)[a];
                }
                if let OutcomeBasis::Wavelet(omega) = plan.outcome {
                    omega.inverse_in_place(&mut row, &mut scratch);
                }
                let off = (m * q + a) * s;
                covariate_curves[off..off + s].copy_from_slice(&row[..s]);
            }
        }
    }

    let fingerprint = ConfigFingerprint {
        method,
        t_wavelet: plan.phi.spec(),
        s_wavelet: s_spec,
        mcmc,
        eb: &options.eb,
        hyper_override: options.hyper_override.is_some(),
        n: dataset.n(),
        covariates: q,
    };
    let json = serde_json::to_string(&fingerprint).map_err(|e| Error::Config(e.to_string()))?;

    Ok(PosteriorDraws {
        surface,
        wavelet,
        sigma2,
        inclusion,
        covariate_curves,
        covariates: q,
        covariate_labels: dataset.w_labels.clone(),
        t_labels: dataset.t_labels.clone(),
        s_labels: dataset.s_labels.clone(),
        provenance: Provenance {
            method,
            seed: mcmc.seed,
            mcmc: *mcmc,
            t_wavelet: *plan.phi.spec(),
            s_wavelet: s_spec.copied(),
            config_hash: format!("{:016x}", fnv1a(json.as_bytes())),
        },
    })
}

/// Projects column-major coefficient draws onto the data grid.
pub(crate) enum Projector<'a> {
    Wavelet(SurfaceProjector<'a>),
    Identity { phi: &'a WaveletOperator, sites: usize, col: Vec<f64>, scratch: Vec<f64> },
}

impl<'a> Projector<'a> {
    pub(crate) fn new(phi: &'a WaveletOperator, outcome: OutcomeBasis<'a>, sites: usize) -> Self {
        match outcome {
            OutcomeBasis::Wavelet(omega) => Projector::Wavelet(SurfaceProjector::new(phi, omega)),
            OutcomeBasis::Identity => Projector::Identity {
                phi,
                sites,
                col: vec![0.0; phi.padded_length()],
                scratch: vec![0.0; phi.padded_length()],
            },
        }
    }

    pub(crate) fn project(&mut self, beta_star: &[f64], out: &mut [f64]) {
        match self {
            Projector::Wavelet(p) => p.project_into(beta_star, out),
            Projector::Identity { phi, sites, col, scratch } => {
                let tp = phi.padded_length();
                let t = phi.original_length();
                for s in 0..*sites {
                    col.copy_from_slice(&beta_star[s * tp..(s + 1) * tp]);
                    phi.inverse_in_place(col, scratch);
                    for (ti, v) in col[..t].iter().enumerate() {
                        out[ti * *sites + s] = *v;
                    }
                }
            }
        }
    }
}
