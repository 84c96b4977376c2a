//! Storage for retained posterior draws of coefficient surfaces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::McmcConfig;
use crate::wavelet::WaveletSpec;

/// `M` draws of a `T x S` surface, draw-major, each draw row-major with
/// time on rows and sites on columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceDraws {
    draws: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SurfaceDraws {
    pub fn new(draws: usize, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != draws * rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for {draws} draws of a {rows}x{cols} surface",
                data.len()
            )));
        }
        Ok(SurfaceDraws { draws, rows, cols, data })
    }

    pub fn zeros(draws: usize, rows: usize, cols: usize) -> Self {
        SurfaceDraws { draws, rows, cols, data: vec![0.0; draws * rows * cols] }
    }

    /// Build from a per-draw cell list; `draw_cells[m]` is row-major.
    pub fn from_draws(rows: usize, cols: usize, draw_cells: &[Vec<f64>]) -> Result<Self> {
        let data: Vec<f64> = draw_cells.iter().flatten().copied().collect();
        SurfaceDraws::new(draw_cells.len(), rows, cols, data)
    }

    pub fn draws(&self) -> usize {
        self.draws
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn draw(&self, m: usize) -> &[f64] {
        let c = self.cells();
        &self.data[m * c..(m + 1) * c]
    }

    pub fn draw_mut(&mut self, m: usize) -> &mut [f64] {
        let c = self.cells();
        &mut self.data[m * c..(m + 1) * c]
    }

    pub fn get(&self, m: usize, t: usize, s: usize) -> f64 {
        self.data[m * self.cells() + t * self.cols + s]
    }

    /// The `M` draws at one cell, in sampling order.
    pub fn cell_series(&self, t: usize, s: usize) -> Vec<f64> {
        let cell = t * self.cols + s;
        (0..self.draws).map(|m| self.data[m * self.cells() + cell]).collect()
    }

    /// Posterior mean surface, row-major.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.cells()];
        for m in 0..self.draws {
            for (acc, v) in mean.iter_mut().zip(self.draw(m)) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= self.draws as f64);
        mean
    }

    /// Multiply every draw cell-wise by `factor` (row-major `T x S`).
    pub fn rescale_cells(&mut self, factor: &[f64]) {
        assert_eq!(factor.len(), self.cells());
        let c = self.cells();
        for draw in self.data.chunks_exact_mut(c) {
            for (v, f) in draw.iter_mut().zip(factor) {
                *v *= f;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ffr,
    Dlm,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Ffr => "ffr",
            Method::Dlm => "dlm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: Method,
    pub seed: u64,
    pub mcmc: McmcConfig,
    pub t_wavelet: WaveletSpec,
    /// `None` when outcome columns are modeled without a transform.
    pub s_wavelet: Option<WaveletSpec>,
    /// FNV-1a hash of the canonical JSON of the fit configuration.
    pub config_hash: String,
}

/// Retained draws in wavelet space, `M x T* x S*`, each draw column-major
/// (column `c` holds the exposure coefficients of outcome column `c`).
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletDraws {
    pub draws: usize,
    pub t_coefficients: usize,
    pub s_coefficients: usize,
    pub data: Vec<f64>,
}

impl WaveletDraws {
    pub fn draw(&self, m: usize) -> &[f64] {
        let c = self.t_coefficients * self.s_coefficients;
        &self.data[m * c..(m + 1) * c]
    }

    /// Inclusion indicator of `(p, c)` in draw `m`; point-mass draws are exact zeros.
    pub fn included(&self, m: usize, p: usize, c: usize) -> bool {
        self.draw(m)[c * self.t_coefficients + p] != 0.0
    }
}

#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub surface: SurfaceDraws,
    pub wavelet: Option<WaveletDraws>,
    /// `M x S*` residual variances, draw-major.
    pub sigma2: Vec<f64>,
    /// `T* x S*` posterior inclusion frequencies, column-major.
    pub inclusion: Vec<f64>,
    /// `M x q x S` scalar-covariate curves, draw-major.
    pub covariate_curves: Vec<f64>,
    pub covariates: usize,
    pub covariate_labels: Vec<String>,
    pub t_labels: Vec<String>,
    pub s_labels: Vec<String>,
    pub provenance: Provenance,
}

impl PosteriorDraws {
    pub fn draws(&self) -> usize {
        self.surface.draws()
    }

    /// Posterior mean of the scalar-covariate curves, `q x S` row-major.
    pub fn covariate_curve_mean(&self) -> Vec<f64> {
        let (q, s, m) = (self.covariates, self.surface.cols(), self.draws());
        let mut mean = vec![0.0; q * s];
        if mean.is_empty() {
            return mean;
        }
        for draw in self.covariate_curves.chunks_exact(q * s.max(1)).take(m) {
            for (acc, v) in mean.iter_mut().zip(draw) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= m as f64);
        mean
    }
}

/// 64-bit FNV-1a, used for stable configuration fingerprints.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}
