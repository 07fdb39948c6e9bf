//! Plain CSV series for external plotting.

use std::path::{Path, PathBuf};

use super::report::ExperimentReport;
use crate::error::{Error, Result};

pub const RATIO_VS_RADIUS: &str = "ratio_vs_radius.csv";
pub const RATIO_VS_N: &str = "ratio_vs_n.csv";

/// Writes `ratio_vs_radius.csv` (every row of every table with `radius` and
/// `ratio` columns, sorted by table, size and radius) and `ratio_vs_n.csv`
/// (per-table maxima and medians by grid size).
pub fn emit_plot_data(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let size_text = |n: Option<usize>| n.map_or(String::new(), |n| n.to_string());

    let mut points: Vec<(&str, Option<usize>, f64, f64)> = Vec::new();
    for t in &report.tables {
        if let (Some(r), Some(q)) = (t.column("radius"), t.column("ratio")) {
            points.extend(r.into_iter().zip(q).map(|(r, q)| (t.label.as_str(), t.size, r, q)));
        }
    }
    // Stable sort keeps trial order among equal radii.
    points.sort_by(|a, b| a.0.cmp(b.0).then(a.1.cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(["table", "n", "radius", "ratio"]).map_err(csv_err)?;
    for (label, n, r, q) in &points {
        w.write_record([label.to_string(), size_text(*n), r.to_string(), q.to_string()]).map_err(csv_err)?;
    }
    let radius_path = dir.join(RATIO_VS_RADIUS);
    std::fs::write(&radius_path, w.into_inner().map_err(|e| Error::Parse(e.to_string()))?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["table", "n", "max_ratio", "median_ratio"]).map_err(csv_err)?;
    for s in &report.summary.tables {
        if let (Some(n), Some(max), Some(med)) = (s.size, s.max_ratio, s.median_ratio) {
            w.write_record([s.label.clone(), n.to_string(), max.to_string(), med.to_string()]).map_err(csv_err)?;
        }
    }
    let n_path = dir.join(RATIO_VS_N);
    std::fs::write(&n_path, w.into_inner().map_err(|e| Error::Parse(e.to_string()))?)?;
    Ok(vec![radius_path, n_path])
}
