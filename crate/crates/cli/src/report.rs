//! Tables and figures assembled from stored simulation metrics.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fofreg::draws::Method;
use fofreg::gridio::{read_json, Grid};
use fofreg::sim::{MetricsReport, Summary};

use crate::commands::{number_tag, METRICS_FILE};
use crate::config::ReportConfig;
use crate::error::{invalid, CliResult};
use crate::heatmap::write_png;

const METHODS: [Method; 2] = [Method::Ffr, Method::Dlm];

/// A loaded metrics file and the directory its grids live in.
pub struct Source {
    pub dir: PathBuf,
    pub report: MetricsReport,
}

pub fn load_source(path: &Path) -> CliResult<Source> {
    let file = if path.is_dir() { path.join(METRICS_FILE) } else { path.to_path_buf() };
    if !file.exists() {
        return Err(invalid(format!("metrics file not found: {}", file.display())));
    }
    let report: MetricsReport = read_json(&file)?;
    let dir = file.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    Ok(Source { dir, report })
}

/// Percentage with its standard error, or `n/a` for the error when there is
/// only one replicate.
pub fn pct(s: &Summary) -> String {
    match s.se {
        Some(se) => format!("{:.1} ({:.1})", 100.0 * s.mean, 100.0 * se),
        None => format!("{:.1} (n/a)", 100.0 * s.mean),
    }
}

fn stnr_cell(r: &MetricsReport) -> String {
    r.stnr.map(|v| format!("{v}")).unwrap_or_else(|| "n/a".into())
}

/// Rows of the BFDR table: one per scenario and `delta`.
pub fn bfdr_table(reports: &[&MetricsReport]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for r in reports {
        for &delta in &r.deltas {
            let mut row = vec![r.scenario.clone(), stnr_cell(r), number_tag(delta)];
            for m in METHODS {
                let b = r.method(m).and_then(|mm| mm.bfdr.iter().find(|b| b.delta == delta));
                match b {
                    Some(b) => {
                        row.push(pct(&b.metrics.sensitivity));
                        row.push(pct(&b.metrics.fdr));
                    }
                    None => row.extend(["n/a".to_string(), "n/a".to_string()]),
                }
            }
            rows.push(row);
        }
    }
    rows
}

/// Rows of the SimBaS table: averaged-score rates, then per-replicate rates.
pub fn simbas_table(reports: &[&MetricsReport]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for r in reports {
        let mut row = vec![r.scenario.clone(), stnr_cell(r), number_tag(r.alpha)];
        for m in METHODS {
            match r.method(m) {
                Some(mm) => {
                    let s = &mm.simbas;
                    row.push(format!("{:.1}", 100.0 * s.averaged_sensitivity));
                    row.push(format!("{:.1}", 100.0 * s.averaged_fdr));
                    row.push(pct(&s.per_replicate.sensitivity));
                    row.push(pct(&s.per_replicate.fdr));
                }
                None => row.extend(std::iter::repeat("n/a".to_string()).take(4)),
            }
        }
        rows.push(row);
    }
    rows
}

pub fn rmse_table(reports: &[&MetricsReport]) -> Vec<Vec<String>> {
    reports
        .iter()
        .map(|r| {
            let mut row = vec![r.scenario.clone(), stnr_cell(r)];
            for m in METHODS {
                row.push(r.method(m).map(|mm| format!("{:.4}", mm.total_rmse)).unwrap_or_else(|| "n/a".into()));
            }
            row.push(r.rmse_reduction.map(|v| format!("{:.1}", 100.0 * v)).unwrap_or_else(|| "n/a".into()));
            row
        })
        .collect()
}

const BFDR_HEADER: [&str; 7] = ["scenario", "stnr", "delta", "ffr_sens", "ffr_fdr", "dlm_sens", "dlm_fdr"];
const SIMBAS_HEADER: [&str; 11] = [
    "scenario",
    "stnr",
    "alpha",
    "ffr_sens_avg",
    "ffr_fdr_avg",
    "ffr_sens_rep",
    "ffr_fdr_rep",
    "dlm_sens_avg",
    "dlm_fdr_avg",
    "dlm_sens_rep",
    "dlm_fdr_rep",
];
const RMSE_HEADER: [&str; 5] = ["scenario", "stnr", "ffr_rmse", "dlm_rmse", "reduction_pct"];

fn markdown(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = format!("| {} |\n", header.join(" | "));
    let _ = writeln!(s, "|{}", "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(s, "| {} |", r.join(" | "));
    }
    s
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| invalid(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(|e| invalid(format!("{}: {e}", path.display())))
}

/// Grid files worth a picture, by stem.
fn grid_stems(r: &MetricsReport) -> Vec<String> {
    let mut stems = vec!["truth".to_string()];
    for mm in &r.methods {
        let name = mm.method.name();
        stems.push(format!("{name}_mean"));
        stems.push(format!("{name}_simbas_mean"));
        for b in &mm.bfdr {
            stems.push(format!("{name}_bfdr_freq_{}", number_tag(b.delta)));
        }
    }
    stems
}

pub fn report(cfg: &ReportConfig) -> CliResult<PathBuf> {
    if cfg.metrics.is_empty() {
        return Err(invalid("no metrics given (--metrics or \"metrics\")"));
    }
    let sources = cfg.metrics.iter().map(|p| load_source(p)).collect::<CliResult<Vec<_>>>()?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from(crate::commands::DEFAULT_OUT));
    fs::create_dir_all(&out).map_err(|e| invalid(format!("{}: {e}", out.display())))?;
    let reports: Vec<&MetricsReport> = sources.iter().map(|s| &s.report).collect();

    let t1 = bfdr_table(&reports);
    let t2 = simbas_table(&reports);
    let t3 = rmse_table(&reports);
    write_csv(&out.join("table1_bfdr.csv"), &BFDR_HEADER, &t1)?;
    write_csv(&out.join("table2_simbas.csv"), &SIMBAS_HEADER, &t2)?;
    write_csv(&out.join("rmse.csv"), &RMSE_HEADER, &t3)?;

    let mut md = String::from("# Simulation report\n\n");
    md.push_str("Rates are percentages; standard errors over replicates in parentheses.\n\n");
    md.push_str("## Table 1. BFDR sensitivity and FDR\n\n");
    md.push_str(&markdown(&BFDR_HEADER, &t1));
    md.push_str("\n## Table 2. SimBaS sensitivity and FDR\n\n");
    md.push_str("`avg` flags cells whose replicate-averaged score is at most alpha; `rep` averages per-replicate rates.\n\n");
    md.push_str(&markdown(&SIMBAS_HEADER, &t2));
    md.push_str("\n## Estimation error\n\n");
    md.push_str(&markdown(&RMSE_HEADER, &t3));

    if cfg.heatmaps.unwrap_or(true) {
        md.push_str("\n## Figures\n\n");
        for src in &sources {
            let r = &src.report;
            for stem in grid_stems(r) {
                let path = src.dir.join(format!("{stem}.csv"));
                if !path.exists() {
                    continue;
                }
                let grid = Grid::read(&path)?;
                let png = format!("{}_{stem}.png", r.scenario);
                write_png(&out.join(&png), grid.layer(0), grid.rows(), grid.cols())?;
                let _ = writeln!(md, "![{} {stem}]({png})", r.scenario);
            }
        }
    }
    fs::write(out.join("report.md"), md).map_err(|e| invalid(format!("{}: {e}", out.display())))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_replicate_has_no_error() {
        assert_eq!(pct(&Summary::new(vec![0.5])), "50.0 (n/a)");
        assert_eq!(pct(&Summary::new(vec![0.4, 0.6])), "50.0 (10.0)");
    }

    #[test]
    fn markdown_layout() {
        let md = markdown(&["a", "b"], &[vec!["1".into(), "2".into()]]);
        assert_eq!(md, "| a | b |\n|---|---|\n| 1 | 2 |\n");
    }
}
