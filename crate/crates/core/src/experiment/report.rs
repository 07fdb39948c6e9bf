//! Tables, summaries and their on-disk form.
//!
//! A report is a set of CSV tables plus `{check}-summary.json`. The summary
//! repeats statistics that can be recomputed from the tables; loading a
//! report recomputes them and rejects any mismatch.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{CheckId, ExperimentConfig};
use crate::error::{Error, Result};
use crate::stats;

/// Rows of numbers under named columns. Flags are stored as `0` / `1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub label: String,
    /// Grid size the rows were computed at, when the table belongs to one.
    pub size: Option<usize>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(label: &str, size: Option<usize>, columns: &[&str]) -> Self {
        Self { label: label.into(), size, columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width does not match table `{}`", self.label);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn file_name(&self, check: CheckId) -> String {
        match self.size {
            Some(n) => format!("{check}-{}-n{n}.csv", self.label),
            None => format!("{check}-{}.csv", self.label),
        }
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_csv(label: &str, size: Option<usize>, bytes: &[u8]) -> Result<Self> {
        let mut r = csv::Reader::from_reader(bytes);
        let columns: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{s}` in table `{label}`"))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Self { label: label.into(), size, columns, rows })
    }

    pub fn summarize(&self, check: CheckId) -> TableSummary {
        let ratio = self.column("ratio").unwrap_or_default();
        let pass = self.column("pass");
        TableSummary {
            label: self.label.clone(),
            size: self.size,
            file: self.file_name(check),
            rows: self.rows.len(),
            max_ratio: stats::max(&ratio),
            median_ratio: stats::median(&ratio),
            pass_count: pass.as_ref().map(|p| p.iter().filter(|v| **v != 0.0).count()),
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableSummary {
    pub label: String,
    pub size: Option<usize>,
    pub file: String,
    pub rows: usize,
    /// Statistics of the `ratio` column, when the table has one.
    pub max_ratio: Option<f64>,
    pub median_ratio: Option<f64>,
    /// Rows with a nonzero `pass` column, when the table has one.
    pub pass_count: Option<usize>,
}

/// JSON has no infinities or NaN; those are written as the strings `inf`,
/// `-inf` and `NaN`.
mod json_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(|_| serde::de::Error::custom(format!("bad number `{t}`"))),
        }
    }
}

/// Largest-ratio comparison across grid sizes for one table label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub label: String,
    pub sizes: Vec<usize>,
    pub max_ratios: Vec<f64>,
    /// `max / min` of the per-size maxima.
    #[serde(with = "json_float")]
    pub factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub name: String,
    #[serde(with = "json_float")]
    pub observed: f64,
    #[serde(with = "json_float")]
    pub threshold: f64,
    pub passed: bool,
    pub note: String,
}

impl Outcome {
    /// Passes when `observed < threshold`.
    pub fn below(name: &str, observed: f64, threshold: f64, note: impl Into<String>) -> Self {
        Self { name: name.into(), observed, threshold, passed: observed < threshold, note: note.into() }
    }

    /// Passes when `observed <= threshold`.
    pub fn at_most(name: &str, observed: f64, threshold: f64, note: impl Into<String>) -> Self {
        Self { name: name.into(), observed, threshold, passed: observed <= threshold, note: note.into() }
    }

    pub fn flag(name: &str, passed: bool, note: impl Into<String>) -> Self {
        Self { name: name.into(), observed: passed as u8 as f64, threshold: 1.0, passed, note: note.into() }
    }

    /// Records a value without a pass condition.
    pub fn record(name: &str, observed: f64, note: impl Into<String>) -> Self {
        Self { name: name.into(), observed, threshold: f64::INFINITY, passed: observed.is_finite(), note: note.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub check: String,
    pub seed: u64,
    pub passed: bool,
    pub outcomes: Vec<Outcome>,
    pub tables: Vec<TableSummary>,
    pub refinement: Vec<Refinement>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub tables: Vec<Table>,
    pub summary: Summary,
}

/// Refinement blocks for labels present at two or more grid sizes.
pub fn refinement_blocks(tables: &[TableSummary]) -> Vec<Refinement> {
    let mut by_label: BTreeMap<&str, Vec<(usize, f64)>> = BTreeMap::new();
    for t in tables {
        if let (Some(n), Some(m)) = (t.size, t.max_ratio) {
            by_label.entry(&t.label).or_default().push((n, m));
        }
    }
    by_label
        .into_iter()
        .filter(|(_, v)| v.len() >= 2)
        .map(|(label, mut v)| {
            v.sort_by_key(|e| e.0);
            let max_ratios: Vec<f64> = v.iter().map(|e| e.1).collect();
            let hi = max_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = max_ratios.iter().copied().fold(f64::INFINITY, f64::min);
            let factor = if hi == lo { 1.0 } else { hi / lo };
            Refinement { label: label.into(), sizes: v.iter().map(|e| e.0).collect(), max_ratios, factor }
        })
        .collect()
}

impl ExperimentReport {
    pub fn new(config: ExperimentConfig, tables: Vec<Table>, outcomes: Vec<Outcome>, warnings: Vec<String>) -> Self {
        let summaries: Vec<TableSummary> = tables.iter().map(|t| t.summarize(config.check)).collect();
        let refinement = refinement_blocks(&summaries);
        let summary = Summary {
            check: config.check.to_string(),
            seed: config.seed,
            passed: outcomes.iter().all(|o| o.passed),
            outcomes,
            tables: summaries,
            refinement,
            warnings,
        };
        Self { config, tables, summary }
    }

    pub fn passed(&self) -> bool {
        self.summary.passed
    }

    pub fn table(&self, label: &str, size: Option<usize>) -> Option<&Table> {
        self.tables.iter().find(|t| t.label == label && t.size == size)
    }

    pub fn outcome(&self, name: &str) -> Option<&Outcome> {
        self.summary.outcomes.iter().find(|o| o.name == name)
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)? + "\n")
    }

    fn config_file(check: CheckId) -> String {
        format!("{check}-config.cfg")
    }

    fn summary_file(check: CheckId) -> String {
        format!("{check}-summary.json")
    }

    /// Writes the tables, the summary and an echo of the config into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let check = self.config.check;
        let mut written = Vec::new();
        for t in &self.tables {
            let p = dir.join(t.file_name(check));
            std::fs::write(&p, t.to_csv()?)?;
            written.push(p);
        }
        let p = dir.join(Self::config_file(check));
        std::fs::write(&p, self.config.to_text())?;
        written.push(p);
        let p = dir.join(Self::summary_file(check));
        std::fs::write(&p, self.summary_json()?)?;
        written.push(p);
        Ok(written)
    }

    /// Reads a report written by [`ExperimentReport::write`], recomputing the
    /// table statistics and refinement blocks from the rows.
    pub fn load(dir: impl AsRef<Path>, check: CheckId) -> Result<Self> {
        let dir = dir.as_ref();
        let config = ExperimentConfig::load(dir.join(Self::config_file(check)))?;
        let summary: Summary = serde_json::from_str(&std::fs::read_to_string(dir.join(Self::summary_file(check)))?)?;
        let mut tables = Vec::new();
        for ts in &summary.tables {
            let t = Table::from_csv(&ts.label, ts.size, &std::fs::read(dir.join(&ts.file))?)?;
            let again = t.summarize(check);
            if &again != ts {
                return Err(Error::Inconsistent(format!("summary of `{}` does not match its rows", ts.file)));
            }
            tables.push(t);
        }
        if refinement_blocks(&summary.tables) != summary.refinement {
            return Err(Error::Inconsistent("refinement block does not match the tables".into()));
        }
        if summary.passed != summary.outcomes.iter().all(|o| o.passed) {
            return Err(Error::Inconsistent("overall verdict does not match the outcomes".into()));
        }
        Ok(Self { config, tables, summary })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentReport {
        let mut cfg = ExperimentConfig::default();
        cfg.check = CheckId::Thm51;
        let mut tables = Vec::new();
        for (n, scale) in [(64, 1.0), (128, 1.5)] {
            let mut t = Table::new("atoms", Some(n), &["trial", "radius", "ratio", "pass"]);
            for i in 0..5 {
                t.push(vec![i as f64, 0.1 * (i + 1) as f64, scale * (1.0 + i as f64 / 7.0), (i % 2) as f64]);
            }
            tables.push(t);
        }
        let outcomes = vec![
            Outcome::below("x", 1.0, 2.0, ""),
            Outcome::record("y", 0.1 + 0.2, ""),
            Outcome::at_most("z", f64::NEG_INFINITY, 0.0, ""),
        ];
        ExperimentReport::new(cfg, tables, outcomes, vec![])
    }

    #[test]
    fn summary_and_refinement() {
        let r = sample();
        let s = &r.summary.tables[0];
        assert_eq!(s.rows, 5);
        assert_eq!(s.pass_count, Some(2));
        assert_eq!(s.max_ratio, Some(1.0 + 4.0 / 7.0));
        assert_eq!(r.summary.refinement.len(), 1);
        assert!((r.summary.refinement[0].factor - 1.5).abs() < 1e-15);
        assert!(r.passed());
    }

    #[test]
    fn write_then_load_round_trips_and_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let r = sample();
        r.write(dir.path()).unwrap();
        let back = ExperimentReport::load(dir.path(), CheckId::Thm51).unwrap();
        assert_eq!(back, r);
        let f = dir.path().join("thm51-atoms-n64.csv");
        let text = std::fs::read_to_string(&f).unwrap().replacen("\n0,", "\n9,", 1);
        std::fs::write(&f, text).unwrap();
        assert!(ExperimentReport::load(dir.path(), CheckId::Thm51).is_ok());
        let text = std::fs::read_to_string(&f).unwrap().replacen(",1\n", ",0\n", 1);
        std::fs::write(&f, text).unwrap();
        assert!(matches!(ExperimentReport::load(dir.path(), CheckId::Thm51), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn empty_tables_have_zero_counts() {
        let mut cfg = ExperimentConfig::default();
        cfg.check = CheckId::Thm51;
        let t = Table::new("atoms", Some(64), &["trial", "ratio", "pass"]);
        let r = ExperimentReport::new(cfg, vec![t], vec![], vec![]);
        let s = &r.summary.tables[0];
        assert_eq!((s.rows, s.pass_count, s.max_ratio), (0, Some(0), None));
        assert_eq!(String::from_utf8(r.tables[0].to_csv().unwrap()).unwrap(), "trial,ratio,pass\n");
    }
}
