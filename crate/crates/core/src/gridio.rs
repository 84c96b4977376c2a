//! File formats: grid CSVs with a metadata header, labelled data matrices,
//! and the binary draws store with its JSON manifest.
//!
//! A grid file looks like
//!
//! ```text
//! # dims layers=1 rows=2 cols=3
//! # labels {"name":"beta_mean","layers":["mean"],"rows":["t1","t2"],"cols":["s1","s2","s3"]}
//! 0.1,0,0
//! 0,0.25,-1e-7
//! ```
//!
//! Values are written with the shortest representation that parses back to
//! the same `f64`, so a write/read cycle is lossless.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::draws::{PosteriorDraws, Provenance, SurfaceDraws};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridLabels {
    pub name: String,
    pub layers: Vec<String>,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
}

/// One or more `rows x cols` layers, each row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub labels: GridLabels,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn new(name: &str, rows: Vec<String>, cols: Vec<String>, data: Vec<f64>) -> Result<Self> {
        Grid::layered(name, vec![name.to_string()], rows, cols, data)
    }

    pub fn layered(
        name: &str,
        layers: Vec<String>,
        rows: Vec<String>,
        cols: Vec<String>,
        data: Vec<f64>,
    ) -> Result<Self> {
        let expected = layers.len() * rows.len() * cols.len();
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "grid '{name}' has {} values, expected {} layers x {} x {}",
                data.len(),
                layers.len(),
                rows.len(),
                cols.len()
            )));
        }
        Ok(Grid { labels: GridLabels { name: name.to_string(), layers, rows, cols }, data })
    }

    pub fn rows(&self) -> usize {
        self.labels.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.labels.cols.len()
    }

    pub fn layers(&self) -> usize {
        self.labels.layers.len()
    }

    pub fn layer(&self, l: usize) -> &[f64] {
        let c = self.rows() * self.cols();
        &self.data[l * c..(l + 1) * c]
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let labels = serde_json::to_string(&self.labels).map_err(|e| Error::Config(e.to_string()))?;
        let mut out = format!(
            "# dims layers={} rows={} cols={}\n# labels {labels}\n",
            self.layers(),
            self.rows(),
            self.cols()
        );
        let cols = self.cols().max(1);
        for row in self.data.chunks(cols) {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = self.to_csv_string()?;
        fs::write(path, text).map_err(|e| io_error(path, e))
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines();
        let dims = lines
            .next()
            .and_then(|l| l.strip_prefix("# dims "))
            .ok_or_else(|| Error::InvalidData(format!("{origin}: missing '# dims' header")))?;
        let mut shape = [0usize; 3];
        for (slot, key) in shape.iter_mut().zip(["layers", "rows", "cols"]) {
            *slot = dims
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::InvalidData(format!("{origin}: '# dims' lacks {key}")))?;
        }
        let labels_json = lines
            .next()
            .and_then(|l| l.strip_prefix("# labels "))
            .ok_or_else(|| Error::InvalidData(format!("{origin}: missing '# labels' header")))?;
        let labels: GridLabels = serde_json::from_str(labels_json)
            .map_err(|e| Error::InvalidData(format!("{origin}: bad labels header: {e}")))?;
        let [layers, rows, cols] = shape;
        if labels.layers.len() != layers || labels.rows.len() != rows || labels.cols.len() != cols {
            return Err(Error::InvalidData(format!("{origin}: labels disagree with dims")));
        }
        let mut data = Vec::with_capacity(layers * rows * cols);
        for (i, line) in lines.enumerate() {
            let line_no = i + 3;
            let before = data.len();
            for field in line.split(',') {
                let v = field.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidData(format!("{origin}: line {line_no}: cannot parse '{field}'"))
                })?;
                data.push(v);
            }
            if data.len() - before != cols {
                return Err(Error::InvalidData(format!(
                    "{origin}: line {line_no} has {} values, expected {cols}",
                    data.len() - before
                )));
            }
        }
        Grid::layered(&labels.name.clone(), labels.layers, labels.rows, labels.cols, data)
            .map_err(|e| Error::InvalidData(format!("{origin}: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        Grid::parse(&text, &path.display().to_string())
    }
}

pub(crate) fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::InvalidData(format!("{}: {e}", path.display()))
}

/// A numeric matrix whose first CSV row holds column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledMatrix {
    pub labels: Vec<String>,
    pub values: DMatrix<f64>,
}

/// Read a header-row CSV of numbers. Errors name the file, row and column
/// (1-based data rows, header excluded).
pub fn read_matrix_csv(path: &Path) -> Result<LabelledMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))?;
    let labels: Vec<String> = reader
        .headers()
        .map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))?;
        if record.len() != labels.len() {
            return Err(Error::InvalidData(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                r + 1,
                record.len(),
                labels.len()
            )));
        }
        for (c, field) in record.iter().enumerate() {
            let v = field.parse::<f64>().map_err(|_| {
                Error::InvalidData(format!(
                    "{}: row {}, column {} ('{}'): cannot parse '{field}'",
                    path.display(),
                    r + 1,
                    c + 1,
                    labels[c]
                ))
            })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::InvalidData(format!("{}: no data rows", path.display())));
    }
    Ok(LabelledMatrix {
        values: DMatrix::from_row_slice(rows, labels.len(), &values),
        labels,
    })
}

/// Manifest written next to `draws.bin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrawsManifest {
    /// Always `"f64-le"`: little-endian IEEE doubles, draw-major, each draw row-major.
    pub encoding: String,
    pub file: String,
    pub draws: usize,
    pub rows: usize,
    pub cols: usize,
    pub t_labels: Vec<String>,
    pub s_labels: Vec<String>,
    /// Multiply each cell by this to return to the raw data scale.
    pub cell_scale: Option<Vec<f64>>,
    pub provenance: Provenance,
}

pub const DRAWS_FILE: &str = "draws.bin";
pub const MANIFEST_FILE: &str = "draws.json";

pub fn write_draws(dir: &Path, draws: &PosteriorDraws, cell_scale: Option<Vec<f64>>) -> Result<PathBuf> {
    let surface = &draws.surface;
    let bin = dir.join(DRAWS_FILE);
    let file = fs::File::create(&bin).map_err(|e| io_error(&bin, e))?;
    let mut w = BufWriter::new(file);
    for v in surface.as_slice() {
        w.write_all(&v.to_le_bytes()).map_err(|e| io_error(&bin, e))?;
    }
    w.flush().map_err(|e| io_error(&bin, e))?;
    let manifest = DrawsManifest {
        encoding: "f64-le".into(),
        file: DRAWS_FILE.into(),
        draws: surface.draws(),
        rows: surface.rows(),
        cols: surface.cols(),
        t_labels: draws.t_labels.clone(),
        s_labels: draws.s_labels.clone(),
        cell_scale,
        provenance: draws.provenance.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Read a manifest and its draws. Draws come back on the scale they were
/// stored at; apply `cell_scale` to undo preprocessing.
pub fn read_draws(manifest_path: &Path) -> Result<(DrawsManifest, SurfaceDraws)> {
    let text = fs::read_to_string(manifest_path).map_err(|e| io_error(manifest_path, e))?;
    let manifest: DrawsManifest = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidData(format!("{}: {e}", manifest_path.display())))?;
    if manifest.encoding != "f64-le" {
        return Err(Error::InvalidData(format!(
            "{}: unsupported encoding '{}'",
            manifest_path.display(),
            manifest.encoding
        )));
    }
    let bin = manifest_path.parent().unwrap_or(Path::new(".")).join(&manifest.file);
    let bytes = fs::read(&bin).map_err(|e| io_error(&bin, e))?;
    let expected = manifest.draws * manifest.rows * manifest.cols;
    if bytes.len() != expected * 8 {
        return Err(Error::InvalidData(format!(
            "{}: {} bytes, manifest implies {}",
            bin.display(),
            bytes.len(),
            expected * 8
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
        .collect();
    let surface = SurfaceDraws::new(manifest.draws, manifest.rows, manifest.cols, data)?;
    Ok((manifest, surface))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
