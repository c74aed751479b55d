//! Benchmark report tables: per-seed records, per-cell means, text and CSV rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::ser::SerReport;
use crate::error::{Error, Result};

/// One trained-and-evaluated model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub functionality: String,
    pub increment: f64,
    pub system: String,
    pub seed: u64,
    #[serde(rename = "SER")]
    pub ser: f64,
    #[serde(rename = "S")]
    pub substitutions: usize,
    #[serde(rename = "I")]
    pub insertions: usize,
    #[serde(rename = "D")]
    pub deletions: usize,
    #[serde(rename = "C")]
    pub correct: usize,
    pub aug_size: usize,
}

impl CellRecord {
    pub fn counts(&self) -> SerReport {
        SerReport {
            substitutions: self.substitutions,
            insertions: self.insertions,
            deletions: self.deletions,
            correct: self.correct,
        }
    }
}

/// Mean over seeds of one (functionality, increment, system) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub functionality: String,
    pub increment: f64,
    pub system: String,
    pub mean_ser: f64,
    pub per_seed: Vec<f64>,
    pub mean_aug_size: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchmarkReport {
    pub records: Vec<CellRecord>,
}

impl BenchmarkReport {
    /// Cells in order of first appearance.
    pub fn summary(&self) -> Vec<CellSummary> {
        let mut order: Vec<(String, u64, String)> = Vec::new();
        let mut groups: BTreeMap<(String, u64, String), Vec<&CellRecord>> = BTreeMap::new();
        for r in &self.records {
            let key = (r.functionality.clone(), r.increment.to_bits(), r.system.clone());
            let g = groups.entry(key.clone()).or_default();
            if g.is_empty() {
                order.push(key);
            }
            g.push(r);
        }
        order
            .into_iter()
            .map(|key| {
                let g = &groups[&key];
                let n = g.len() as f64;
                CellSummary {
                    functionality: key.0.clone(),
                    increment: f64::from_bits(key.1),
                    system: key.2.clone(),
                    mean_ser: g.iter().map(|r| r.ser).sum::<f64>() / n,
                    per_seed: g.iter().map(|r| r.ser).collect(),
                    mean_aug_size: g.iter().map(|r| r.aug_size as f64).sum::<f64>() / n,
                }
            })
            .collect()
    }

    /// Mean SER of one cell, if present.
    pub fn mean_ser(&self, functionality: &str, increment: f64, system: &str) -> Option<f64> {
        self.summary()
            .into_iter()
            .find(|c| c.functionality == functionality && c.increment == increment && c.system == system)
            .map(|c| c.mean_ser)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            out.serialize(r).map_err(|e| Error::data(format!("csv: {}", e)))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let records = reader
            .deserialize()
            .enumerate()
            .map(|(i, rec)| rec.map_err(|e| Error::parse(i + 2, e.to_string())))
            .collect::<Result<Vec<CellRecord>>>()?;
        Ok(BenchmarkReport { records })
    }

    /// Mean SER (in percent) per increment and system; the lowest mean in each row is
    /// marked with `*`, ties included.
    pub fn render_text(&self) -> String {
        let summary = self.summary();
        let mut functionalities: Vec<&str> = Vec::new();
        for c in &summary {
            if !functionalities.contains(&c.functionality.as_str()) {
                functionalities.push(&c.functionality);
            }
        }
        let mut out = String::new();
        for f in functionalities {
            let cells: Vec<&CellSummary> = summary.iter().filter(|c| c.functionality == f).collect();
            let mut systems: Vec<&str> = Vec::new();
            let mut increments: Vec<f64> = Vec::new();
            for c in &cells {
                if !systems.contains(&c.system.as_str()) {
                    systems.push(&c.system);
                }
                if !increments.contains(&c.increment) {
                    increments.push(c.increment);
                }
            }
            let mut rows: Vec<Vec<String>> = vec![std::iter::once("increment".to_string())
                .chain(systems.iter().map(|s| s.to_string()))
                .collect()];
            for &inc in &increments {
                let means: Vec<Option<f64>> = systems
                    .iter()
                    .map(|s| cells.iter().find(|c| c.increment == inc && c.system == *s).map(|c| c.mean_ser))
                    .collect();
                let best = means.iter().flatten().copied().fold(f64::INFINITY, f64::min);
                let mut row = vec![format!("{}%", (inc * 100.0).round())];
                row.extend(means.iter().map(|m| match m {
                    Some(v) if *v == best => format!("{:.2}*", v * 100.0),
                    Some(v) => format!("{:.2}", v * 100.0),
                    None => "-".to_string(),
                }));
                rows.push(row);
            }
            let widths: Vec<usize> = (0..rows[0].len())
                .map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0))
                .collect();
            let _ = writeln!(out, "functionality: {} (SER %, mean over seeds; * = best)", f);
            for row in rows {
                let line: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{:>w$}", c, w = w)).collect();
                let _ = writeln!(out, "{}", line.join("  ").trim_end());
            }
            out.push('\n');
        }
        out
    }
}
