use std::fs;
use std::path::{Path, PathBuf};

use fofreg::dlm::fit_dlm_surface;
use fofreg::draws::{Method, PosteriorDraws};
use fofreg::gridio::{read_draws, write_draws, write_json, Grid, MANIFEST_FILE};
use fofreg::inference::{bfdr_flag, pointwise_probability, simbas};
use fofreg::model::{fit_ffr, preprocess, FitOptions};
use fofreg::sim::{run_replicates, MetricsReport, Scenario};
use serde::Serialize;

use crate::config::{FitConfig, InferConfig};
use crate::error::{invalid, CliResult};
use crate::heatmap::write_png;
use crate::ingest::load_dataset;

pub const DEFAULT_OUT: &str = "out";

fn prepare_out(out: &Option<PathBuf>) -> CliResult<PathBuf> {
    let dir = out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    fs::create_dir_all(&dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

/// Write a single-layer grid as CSV and, optionally, as a heatmap.
fn emit(dir: &Path, stem: &str, grid: &Grid, png: bool) -> CliResult<()> {
    grid.write(&dir.join(format!("{stem}.csv")))?;
    if png {
        write_png(&dir.join(format!("{stem}.png")), grid.layer(0), grid.rows(), grid.cols())?;
    }
    Ok(())
}

/// Shortest decimal form, as used in file names (`0.1`, `0.05`).
pub fn number_tag(v: f64) -> String {
    format!("{v}")
}

pub fn fit(method: Method, cfg: &FitConfig) -> CliResult<PathBuf> {
    let out = prepare_out(&cfg.out)?;
    let raw = load_dataset(cfg)?;
    let (ds, report) = preprocess(&raw, &cfg.preprocess)?;
    let t_spec = cfg.t_wavelet.spec(ds.times())?;
    let options = FitOptions { eb: cfg.eb, ..Default::default() };
    let draws: PosteriorDraws = match method {
        Method::Ffr => fit_ffr(&ds, &t_spec, &cfg.s_wavelet.spec(ds.sites())?, &cfg.mcmc, &options)?,
        Method::Dlm => fit_dlm_surface(&ds, &t_spec, &cfg.mcmc, &options)?.draws,
    };

    let (t, s) = (ds.times(), ds.sites());
    let scale: Vec<f64> = (0..t * s).map(|c| report.surface_factor(c / s, c % s)).collect();
    let mean: Vec<f64> = draws.surface.mean().iter().zip(&scale).map(|(m, f)| m * f).collect();
    let grid = Grid::new("beta_mean", ds.t_labels.clone(), ds.s_labels.clone(), mean)?;
    emit(&out, "beta_mean", &grid, true)?;

    // covariate curves on the outcome scale
    let mut gamma = draws.covariate_curve_mean();
    if report.scaled {
        for (i, v) in gamma.iter_mut().enumerate() {
            *v *= report.y_sds[i % s];
        }
    }
    Grid::new("gamma_curves", ds.w_labels.clone(), ds.s_labels.clone(), gamma)?
        .write(&out.join("gamma_curves.csv"))?;
    write_json(&out.join("preprocess_report.json"), &report)?;
    write_draws(&out, &draws, Some(scale))?;
    Ok(out)
}

#[derive(Serialize)]
struct BfdrSummary {
    delta: f64,
    alpha: f64,
    nu_alpha: f64,
    lambda: usize,
    flagged: usize,
}

#[derive(Serialize)]
struct BandSummary {
    alpha: f64,
    quantile: f64,
    flagged: usize,
}

#[derive(Serialize)]
struct InferSummary {
    draws: usize,
    raw_scale: bool,
    bfdr: Vec<BfdrSummary>,
    simbas: Vec<BandSummary>,
}

pub fn infer(cfg: &InferConfig) -> CliResult<PathBuf> {
    cfg.validate()?;
    let given = cfg.draws.as_deref().ok_or_else(|| invalid("no draws given (--draws or \"draws\")"))?;
    let manifest_path = if given.is_dir() { given.join(MANIFEST_FILE) } else { given.to_path_buf() };
    if !manifest_path.exists() {
        return Err(invalid(format!("draws manifest not found: {}", manifest_path.display())));
    }
    let (manifest, mut surface) = read_draws(&manifest_path)?;
    let raw_scale = cfg.raw_scale && manifest.cell_scale.is_some();
    if let (true, Some(scale)) = (raw_scale, &manifest.cell_scale) {
        if scale.len() != surface.cells() {
            return Err(invalid(format!("{}: cell_scale has the wrong length", manifest_path.display())));
        }
        surface.rescale_cells(scale);
    }
    let out = prepare_out(&cfg.out)?;
    let (rows, cols) = (manifest.t_labels.clone(), manifest.s_labels.clone());
    let grid = |name: &str, data: Vec<f64>| Grid::new(name, rows.clone(), cols.clone(), data);

    let mut bfdr = Vec::new();
    for &delta in &cfg.deltas {
        let tag = number_tag(delta);
        let p = pointwise_probability(&surface, delta)?;
        let res = bfdr_flag(&p, delta, cfg.alpha)?;
        emit(&out, &format!("p_delta_{tag}"), &grid(&format!("p_delta_{tag}"), p)?, cfg.heatmaps)?;
        let flags = res.flags.iter().map(|f| if *f { 1.0 } else { 0.0 }).collect();
        emit(&out, &format!("bfdr_flags_{tag}"), &grid(&format!("bfdr_flags_{tag}"), flags)?, cfg.heatmaps)?;
        bfdr.push(BfdrSummary {
            delta,
            alpha: cfg.alpha,
            nu_alpha: res.nu_alpha,
            lambda: res.lambda,
            flagged: res.flagged(),
        });
    }

    if surface.draws() < 10 {
        return Err(invalid(format!("simultaneous bands need at least 10 draws, have {}", surface.draws())));
    }
    let sb = simbas(&surface, &cfg.band_alphas)?;
    emit(&out, "simbas", &grid("simbas", sb.simbas.clone())?, cfg.heatmaps)?;
    let mut summary_layers = sb.mean.clone();
    summary_layers.extend(&sb.sd);
    summary_layers.extend(&sb.rho);
    Grid::layered(
        "posterior_summary",
        vec!["mean".into(), "sd_corrected".into(), "rho".into()],
        rows.clone(),
        cols.clone(),
        summary_layers,
    )?
    .write(&out.join("posterior_summary.csv"))?;
    if cfg.heatmaps {
        write_png(&out.join("beta_mean.png"), &sb.mean, rows.len(), cols.len())?;
    }
    let mut bands = Vec::new();
    for band in &sb.bands {
        let tag = number_tag(band.alpha);
        let mut data = band.lower.clone();
        data.extend(&band.upper);
        let name = format!("bands_{tag}");
        Grid::layered(&name, vec!["lower".into(), "upper".into()], rows.clone(), cols.clone(), data)?
            .write(&out.join(format!("{name}.csv")))?;
        if cfg.heatmaps {
            write_png(&out.join(format!("{name}_lower.png")), &band.lower, rows.len(), cols.len())?;
            write_png(&out.join(format!("{name}_upper.png")), &band.upper, rows.len(), cols.len())?;
        }
        bands.push(BandSummary {
            alpha: band.alpha,
            quantile: band.quantile,
            flagged: sb.flags(band.alpha).iter().filter(|f| **f).count(),
        });
    }
    write_json(
        &out.join("inference_summary.json"),
        &InferSummary { draws: surface.draws(), raw_scale, bfdr, simbas: bands },
    )?;
    Ok(out)
}

pub const METRICS_FILE: &str = "metrics.json";

/// Run the scenario and store its metrics plus the grids behind them.
pub fn simulate(scenario: &Scenario, out: &Option<PathBuf>) -> CliResult<(PathBuf, MetricsReport)> {
    scenario.validate()?;
    let out = prepare_out(out)?;
    let report = run_replicates(scenario)?;
    write_json(&out.join("scenario.json"), scenario)?;
    write_json(&out.join(METRICS_FILE), &report)?;

    let rows: Vec<String> = (1..=report.times).map(|t| format!("t{t}")).collect();
    let cols: Vec<String> = (1..=report.sites).map(|s| format!("s{s}")).collect();
    let write = |stem: String, data: Vec<f64>| -> CliResult<()> {
        Ok(Grid::new(&stem, rows.clone(), cols.clone(), data)?.write(&out.join(format!("{stem}.csv")))?)
    };
    write("truth".into(), report.truth_values.clone())?;
    for m in &report.methods {
        let name = m.method.name();
        write(format!("{name}_mean"), m.mean_surface.clone())?;
        write(format!("{name}_rmse"), m.rmse.clone())?;
        write(format!("{name}_simbas_mean"), m.simbas.mean_score.clone())?;
        write(format!("{name}_simbas_freq"), m.simbas.per_replicate.flag_frequency.clone())?;
        for b in &m.bfdr {
            write(format!("{name}_bfdr_freq_{}", number_tag(b.delta)), b.metrics.flag_frequency.clone())?;
        }
    }
    Ok((out, report))
}
