//! Loading `Y`, `X` and `W` CSVs into a dataset.

use std::collections::BTreeMap;
use std::path::Path;

use fofreg::gridio::{read_matrix_csv, LabelledMatrix};
use fofreg::model::{CovariateKind, FunctionalDataset};
use nalgebra::DMatrix;

use crate::config::FitConfig;
use crate::error::{invalid, CliResult};

/// Proportions are clipped to this distance from 0 and 1 before the logit.
pub const PROPORTION_CLIP: f64 = 1e-6;

fn read(path: &Path, what: &str) -> CliResult<LabelledMatrix> {
    if !path.exists() {
        return Err(invalid(format!("{what} file not found: {}", path.display())));
    }
    Ok(read_matrix_csv(path)?)
}

/// Logit of clipped proportions. Values outside `[0, 1]` are rejected.
pub fn m_values(y: &mut DMatrix<f64>, origin: &Path, labels: &[String]) -> CliResult<()> {
    for c in 0..y.ncols() {
        for r in 0..y.nrows() {
            let p = y[(r, c)];
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!(
                    "{}: row {}, column {} ('{}'): {p} is not a proportion",
                    origin.display(),
                    r + 1,
                    c + 1,
                    labels[c]
                )));
            }
            let p = p.clamp(PROPORTION_CLIP, 1.0 - PROPORTION_CLIP);
            y[(r, c)] = (p / (1.0 - p)).ln();
        }
    }
    Ok(())
}

pub fn load_dataset(cfg: &FitConfig) -> CliResult<FunctionalDataset> {
    let y_path = cfg.y.as_deref().ok_or_else(|| invalid("no outcome file given (--y or \"y\")"))?;
    let x_path = cfg.x.as_deref().ok_or_else(|| invalid("no exposure file given (--x or \"x\")"))?;
    let mut y = read(y_path, "outcome")?;
    let x = read(x_path, "exposure")?;
    if y.values.nrows() != x.values.nrows() {
        return Err(invalid(format!(
            "row count mismatch: {} has {} rows, {} has {} rows",
            y_path.display(),
            y.values.nrows(),
            x_path.display(),
            x.values.nrows()
        )));
    }
    if cfg.m_values {
        m_values(&mut y.values, y_path, &y.labels)?;
    }
    let ds = FunctionalDataset::new(y.values, x.values)?.with_labels(x.labels, y.labels)?;

    let Some(w_path) = cfg.w.as_deref() else {
        if cfg.w_kinds.is_some() {
            return Err(invalid("covariate kinds given without a covariate file"));
        }
        return Ok(ds);
    };
    let w = read(w_path, "covariate")?;
    if w.values.nrows() != ds.n() {
        return Err(invalid(format!(
            "row count mismatch: {} has {} rows, {} has {} rows",
            w_path.display(),
            w.values.nrows(),
            y_path.display(),
            ds.n()
        )));
    }
    let kinds = covariate_kinds(cfg.w_kinds.as_deref(), &w)?;
    Ok(ds.with_covariates(w.values, kinds, w.labels)?)
}

/// Kinds from the sidecar; without one, 0/1 columns are categorical and the
/// rest continuous.
fn covariate_kinds(sidecar: Option<&Path>, w: &LabelledMatrix) -> CliResult<Vec<CovariateKind>> {
    let Some(path) = sidecar else {
        return Ok((0..w.values.ncols())
            .map(|c| {
                if w.values.column(c).iter().all(|v| *v == 0.0 || *v == 1.0) {
                    CovariateKind::Categorical
                } else {
                    CovariateKind::Continuous
                }
            })
            .collect());
    };
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let map: BTreeMap<String, CovariateKind> =
        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    if let Some(extra) = map.keys().find(|k| !w.labels.contains(k)) {
        return Err(invalid(format!("{}: no covariate column named '{extra}'", path.display())));
    }
    w.labels
        .iter()
        .map(|l| {
            map.get(l)
                .copied()
                .ok_or_else(|| invalid(format!("{}: no kind given for covariate '{l}'", path.display())))
        })
        .collect()
}
