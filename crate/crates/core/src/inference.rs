//! Multiplicity-controlled inference on posterior surface draws.
//!
//! Two procedures are provided:
//!
//! * Bayesian FDR: flag cells whose posterior probability of an effect
//!   larger than `delta` exceeds a threshold chosen so the expected
//!   proportion of false flags is at most `alpha`.
//! * Simultaneous band scores (SimBaS): the smallest `alpha` at which the
//!   joint `(1 - alpha)` credible band excludes zero at a cell.

use serde::{Deserialize, Serialize};

use crate::draws::SurfaceDraws;
use crate::error::{Error, Result};

/// Smallest corrected standard deviation.
pub const SD_FLOOR: f64 = 1e-12;

/// Upper clip for the lag-1 autocorrelation used in the correction.
pub const RHO_MAX: f64 = 0.99;

/// `p(t,s) = (1/M) sum_m 1{|beta_m(t,s)| > delta}`, row-major.
pub fn pointwise_probability(draws: &SurfaceDraws, delta: f64) -> Result<Vec<f64>> {
    if draws.draws() < 2 {
        return Err(Error::InvalidData(format!("need at least 2 draws, got {}", draws.draws())));
    }
    if !(delta >= 0.0) {
        return Err(Error::Config(format!("delta must be non-negative, got {delta}")));
    }
    let mut counts = vec![0u32; draws.cells()];
    for m in 0..draws.draws() {
        for (c, v) in counts.iter_mut().zip(draws.draw(m)) {
            if v.abs() > delta {
                *c += 1;
            }
        }
    }
    let m = draws.draws() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / m).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BfdrResult {
    pub p_grid: Vec<f64>,
    pub delta: f64,
    pub alpha: f64,
    pub nu_alpha: f64,
    pub lambda: usize,
    pub flags: Vec<bool>,
}

impl BfdrResult {
    pub fn flagged(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }
}

/// Bayesian FDR thresholding of a probability grid.
///
/// Probabilities are ranked in descending order (ties by cell index, which
/// is `(t, s)` lexicographic for row-major grids), `lambda` is the longest
/// prefix whose mean of `1 - p` is at most `alpha`, `nu = p_(lambda)`, and
/// cells with `p > nu` are flagged.
pub fn bfdr_flag(p_grid: &[f64], delta: f64, alpha: f64) -> Result<BfdrResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must be in (0, 1), got {alpha}")));
    }
    if let Some(p) = p_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidData(format!("probability {p} outside [0, 1]")));
    }
    let mut order: Vec<usize> = (0..p_grid.len()).collect();
    // sort_by is stable, so equal probabilities keep index order.
    order.sort_by(|&a, &b| p_grid[b].total_cmp(&p_grid[a]));

    let mut lambda = 0;
    let mut running = 0.0;
    for (r, &cell) in order.iter().enumerate() {
        running += 1.0 - p_grid[cell];
        if running / (r + 1) as f64 <= alpha {
            lambda = r + 1;
        }
    }
    let nu_alpha = if lambda == 0 { 1.0 } else { p_grid[order[lambda - 1]] };
    let flags = p_grid.iter().map(|p| *p > nu_alpha).collect();
    Ok(BfdrResult { p_grid: p_grid.to_vec(), delta, alpha, nu_alpha, lambda, flags })
}

/// Divisor applied to the sample SD of autocorrelated draws.
///
/// AR(1) effective-information factor `sqrt((1 - rho) / (1 + rho))` for
/// `rho > 0`, and 1 otherwise.
pub fn autocorrelation_factor(rho: f64) -> f64 {
    if rho > 0.0 {
        ((1.0 - rho) / (1.0 + rho)).sqrt()
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSummary {
    pub mean: f64,
    pub sd: f64,
    pub rho: f64,
    pub factor: f64,
}

/// Mean, autocorrelation-corrected SD and clipped lag-1 autocorrelation of
/// one cell's draw sequence.
pub fn corrected_sd(series: &[f64]) -> CellSummary {
    let m = series.len();
    let mean = series.iter().sum::<f64>() / m as f64;
    let ss: f64 = series.iter().map(|v| (v - mean) * (v - mean)).sum();
    let lag: f64 = series.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    let rho = if ss > 0.0 { (lag / ss).clamp(0.0, RHO_MAX) } else { 0.0 };
    let factor = autocorrelation_factor(rho);
    let sd = if m > 1 { (ss / (m as f64 - 1.0)).sqrt() } else { 0.0 };
    CellSummary { mean, sd: (sd / factor).max(SD_FLOOR), rho, factor }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub alpha: f64,
    /// Empirical `(1 - alpha)` quantile of the max-statistic.
    pub quantile: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Band {
    /// Cells where the band excludes zero.
    pub fn excludes_zero(&self) -> Vec<bool> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| *l > 0.0 || *u < 0.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimbasResult {
    pub simbas: Vec<f64>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub rho: Vec<f64>,
    pub factor: Vec<f64>,
    /// Max-statistic of every draw.
    pub z_max: Vec<f64>,
    pub bands: Vec<Band>,
}

impl SimbasResult {
    pub fn flags(&self, alpha: f64) -> Vec<bool> {
        self.simbas.iter().map(|p| *p <= alpha).collect()
    }

    pub fn band(&self, alpha: f64) -> Option<&Band> {
        self.bands.iter().find(|b| b.alpha == alpha)
    }
}

/// Order statistic used as the `(1 - alpha)` quantile of `z`:
/// `z_(M - floor(alpha M))`, 1-based ascending.
pub fn max_stat_quantile(sorted_z: &[f64], alpha: f64) -> f64 {
    let m = sorted_z.len();
    let k = ((alpha * m as f64).floor() as usize).min(m - 1);
    sorted_z[m - 1 - k]
}

/// Simultaneous band scores and joint bands at each requested `alpha`.
pub fn simbas(draws: &SurfaceDraws, alphas: &[f64]) -> Result<SimbasResult> {
    let m = draws.draws();
    if m < 10 {
        return Err(Error::InvalidData(format!("SimBaS needs at least 10 draws, got {m}")));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(Error::Config(format!("alpha must be in (0, 1), got {a}")));
    }
    let cells = draws.cells();
    let mf = m as f64;

    // Two passes over draws: moments, then lag-1 cross products.
    let mut mean = vec![0.0; cells];
    for k in 0..m {
        for (acc, v) in mean.iter_mut().zip(draws.draw(k)) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= mf);
    let mut ss = vec![0.0; cells];
    let mut lag = vec![0.0; cells];
    for k in 0..m {
        let cur = draws.draw(k);
        for c in 0..cells {
            let d = cur[c] - mean[c];
            ss[c] += d * d;
        }
        if k > 0 {
            let prev = draws.draw(k - 1);
            for c in 0..cells {
                lag[c] += (prev[c] - mean[c]) * (cur[c] - mean[c]);
            }
        }
    }
    let mut sd = vec![0.0; cells];
    let mut rho = vec![0.0; cells];
    let mut factor = vec![1.0; cells];
    for c in 0..cells {
        rho[c] = if ss[c] > 0.0 { (lag[c] / ss[c]).clamp(0.0, RHO_MAX) } else { 0.0 };
        factor[c] = autocorrelation_factor(rho[c]);
        sd[c] = ((ss[c] / (mf - 1.0)).sqrt() / factor[c]).max(SD_FLOOR);
    }

    let z_max: Vec<f64> = (0..m)
        .map(|k| {
            draws
                .draw(k)
                .iter()
                .zip(mean.iter().zip(&sd))
                .map(|(v, (mu, s))| ((v - mu) / s).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let mut sorted = z_max.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));

    let simbas = (0..cells)
        .map(|c| {
            let stat = mean[c].abs() / sd[c];
            // count of z >= stat via the sorted sequence
            let below = sorted.partition_point(|z| *z < stat);
            let count = (m - below).max(1);
            count as f64 / mf
        })
        .collect();

    let bands = alphas
        .iter()
        .map(|&alpha| {
            let q = max_stat_quantile(&sorted, alpha);
            Band {
                alpha,
                quantile: q,
                lower: mean.iter().zip(&sd).map(|(mu, s)| mu - q * s).collect(),
                upper: mean.iter().zip(&sd).map(|(mu, s)| mu + q * s).collect(),
            }
        })
        .collect();

    Ok(SimbasResult { simbas, mean, sd, rho, factor, z_max, bands })
}
