use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a scalar covariate column is treated during preprocessing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateKind {
    /// Centered, standardized and compressed by principal components.
    Continuous,
    /// Binary or categorical indicator, passed through untouched.
    Categorical,
}

/// `n` subjects observed on an outcome grid of `S` sites and an exposure
/// grid of `T` times, plus `q` scalar covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalDataset {
    /// `n x S` outcome.
    pub y: DMatrix<f64>,
    /// `n x T` exposure.
    pub x: DMatrix<f64>,
    /// `n x q` scalar covariates, possibly with zero columns.
    pub w: DMatrix<f64>,
    pub w_kinds: Vec<CovariateKind>,
    pub s_labels: Vec<String>,
    pub t_labels: Vec<String>,
    pub w_labels: Vec<String>,
}

fn default_labels(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

impl FunctionalDataset {
    pub fn new(y: DMatrix<f64>, x: DMatrix<f64>) -> Result<Self> {
        let n = y.nrows();
        let ds = FunctionalDataset {
            s_labels: default_labels("s", y.ncols()),
            t_labels: default_labels("t", x.ncols()),
            w: DMatrix::zeros(n, 0),
            w_kinds: Vec::new(),
            w_labels: Vec::new(),
            y,
            x,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_labels(mut self, t_labels: Vec<String>, s_labels: Vec<String>) -> Result<Self> {
        self.t_labels = t_labels;
        self.s_labels = s_labels;
        self.validate()?;
        Ok(self)
    }

    pub fn with_covariates(
        mut self,
        w: DMatrix<f64>,
        kinds: Vec<CovariateKind>,
        labels: Vec<String>,
    ) -> Result<Self> {
        self.w = w;
        self.w_kinds = kinds;
        self.w_labels = labels;
        self.validate()?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn sites(&self) -> usize {
        self.y.ncols()
    }

    pub fn times(&self) -> usize {
        self.x.ncols()
    }

    pub fn covariates(&self) -> usize {
        self.w.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.nrows();
        if self.x.nrows() != n {
            return Err(Error::Dimension(format!(
                "outcome has {n} rows but exposure has {} rows",
                self.x.nrows()
            )));
        }
        if self.w.nrows() != n {
            return Err(Error::Dimension(format!(
                "outcome has {n} rows but covariates have {} rows",
                self.w.nrows()
            )));
        }
        if n < 2 || self.y.ncols() < 2 || self.x.ncols() < 2 {
            return Err(Error::InvalidData(format!(
                "need n >= 2, S >= 2, T >= 2; got n={n}, S={}, T={}",
                self.y.ncols(),
                self.x.ncols()
            )));
        }
        if self.w_kinds.len() != self.w.ncols() || self.w_labels.len() != self.w.ncols() {
            return Err(Error::Dimension(format!(
                "{} covariate columns but {} kinds and {} labels",
                self.w.ncols(),
                self.w_kinds.len(),
                self.w_labels.len()
            )));
        }
        if self.s_labels.len() != self.y.ncols() || self.t_labels.len() != self.x.ncols() {
            return Err(Error::Dimension("grid labels do not match the grid sizes".into()));
        }
        for (name, m) in [("outcome", &self.y), ("exposure", &self.x), ("covariates", &self.w)] {
            if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
                let (r, c) = (pos % m.nrows(), pos / m.nrows());
                return Err(Error::InvalidData(format!(
                    "{name} has a missing or non-finite value at row {}, column {}",
                    r + 1,
                    c + 1
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessOptions {
    /// Divide outcome and exposure columns by their sample SD after centering.
    pub scale: bool,
    /// Fraction of continuous-covariate variance the retained components must explain.
    pub pca_fraction: f64,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions { scale: true, pca_fraction: 0.95 }
    }
}

/// Constants needed to undo preprocessing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub scaled: bool,
    pub y_means: Vec<f64>,
    pub y_sds: Vec<f64>,
    pub x_means: Vec<f64>,
    pub x_sds: Vec<f64>,
    pub continuous_columns: Vec<usize>,
    pub categorical_columns: Vec<usize>,
    pub continuous_means: Vec<f64>,
    pub continuous_sds: Vec<f64>,
    /// Eigenvalues of the continuous-covariate correlation matrix, descending.
    pub pca_eigenvalues: Vec<f64>,
    /// One loading vector per retained component.
    pub pca_loadings: Vec<Vec<f64>>,
    pub retained_components: usize,
    pub variance_fraction: f64,
}

impl PreprocessReport {
    /// Factor converting a preprocessed-scale coefficient at `(t, s)` back to
    /// original units.
    pub fn surface_factor(&self, t: usize, s: usize) -> f64 {
        if self.scaled {
            self.y_sds[s] / self.x_sds[t]
        } else {
            1.0
        }
    }
}

fn column_stats(m: &DMatrix<f64>, c: usize) -> (f64, f64) {
    let n = m.nrows() as f64;
    let col = m.column(c);
    let mean = col.sum() / n;
    let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn standardize(
    m: &DMatrix<f64>,
    scale: bool,
    what: &str,
    labels: &[String],
) -> Result<(DMatrix<f64>, Vec<f64>, Vec<f64>)> {
    let mut out = m.clone();
    let mut means = Vec::with_capacity(m.ncols());
    let mut sds = Vec::with_capacity(m.ncols());
    for c in 0..m.ncols() {
        let (mean, sd) = column_stats(m, c);
        let sd = if scale {
            if sd <= 1e-12 * (1.0 + mean.abs()) {
                return Err(Error::InvalidData(format!(
                    "{what} column {} ('{}') has zero variance and cannot be scaled",
                    c + 1,
                    labels[c]
                )));
            }
            sd
        } else {
            1.0
        };
        for v in out.column_mut(c).iter_mut() {
            *v = (*v - mean) / sd;
        }
        means.push(mean);
        sds.push(sd);
    }
    Ok((out, means, sds))
}

/// Center (and optionally scale) outcome and exposure columns and compress
/// continuous covariates to their leading principal components.
pub fn preprocess(
    dataset: &FunctionalDataset,
    options: &PreprocessOptions,
) -> Result<(FunctionalDataset, PreprocessReport)> {
    dataset.validate()?;
    if !(options.pca_fraction > 0.0 && options.pca_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "pca_fraction must be in (0, 1], got {}",
            options.pca_fraction
        )));
    }
    let (y, y_means, y_sds) = standardize(&dataset.y, options.scale, "outcome", &dataset.s_labels)?;
    let (x, x_means, x_sds) = standardize(&dataset.x, options.scale, "exposure", &dataset.t_labels)?;

    let n = dataset.n();
    let continuous: Vec<usize> = (0..dataset.covariates())
        .filter(|&c| dataset.w_kinds[c] == CovariateKind::Continuous)
        .collect();
    let categorical: Vec<usize> = (0..dataset.covariates())
        .filter(|&c| dataset.w_kinds[c] == CovariateKind::Categorical)
        .collect();

    let mut report = PreprocessReport {
        scaled: options.scale,
        y_means,
        y_sds,
        x_means,
        x_sds,
        continuous_columns: continuous.clone(),
        categorical_columns: categorical.clone(),
        continuous_means: Vec::new(),
        continuous_sds: Vec::new(),
        pca_eigenvalues: Vec::new(),
        pca_loadings: Vec::new(),
        retained_components: 0,
        variance_fraction: 0.0,
    };

    let mut w_cols: Vec<DVector<f64>> = Vec::new();
    let mut w_labels = Vec::new();
    if !continuous.is_empty() {
        let raw = dataset.w.select_columns(&continuous);
        let labels: Vec<String> = continuous.iter().map(|&c| dataset.w_labels[c].clone()).collect();
        let (z, means, sds) = standardize(&raw, true, "covariate", &labels)?;
        report.continuous_means = means;
        report.continuous_sds = sds;
        let corr = z.transpose() * &z / (n as f64 - 1.0);
        let eig = SymmetricEigen::new(corr);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let total: f64 = values.iter().sum();
        let mut cumulative = 0.0;
        let mut keep = 0;
        for v in &values {
            cumulative += v;
            keep += 1;
            if cumulative >= options.pca_fraction * total * (1.0 - 1e-12) {
                break;
            }
        }
        for (rank, &i) in order.iter().take(keep).enumerate() {
            let mut loading = eig.eigenvectors.column(i).into_owned();
            // Sign convention: largest-magnitude loading positive.
            let imax = loading.iamax();
            if loading[imax] < 0.0 {
                loading.neg_mut();
            }
            w_cols.push(&z * &loading);
            w_labels.push(format!("pc{}", rank + 1));
            report.pca_loadings.push(loading.iter().copied().collect());
        }
        report.pca_eigenvalues = values;
        report.retained_components = keep;
        report.variance_fraction = cumulative / total;
    }
    for &c in &categorical {
        w_cols.push(dataset.w.column(c).into_owned());
        w_labels.push(dataset.w_labels[c].clone());
    }
    let w = if w_cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&w_cols)
    };
    let kinds = (0..report.retained_components)
        .map(|_| CovariateKind::Continuous)
        .chain(categorical.iter().map(|_| CovariateKind::Categorical))
        .collect();

    let out = FunctionalDataset {
        y,
        x,
        w,
        w_kinds: kinds,
        s_labels: dataset.s_labels.clone(),
        t_labels: dataset.t_labels.clone(),
        w_labels,
    };
    Ok((out, report))
}
