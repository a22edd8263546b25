//! Per-iteration training metrics and their on-disk forms.
//!
//! Metrics are JSON lines, one object per iteration, keys in this order:
//! `iteration, lambda_mean, mean_discrepancy, var_real, var_gen, i_d, i_g,
//! wall_seconds`. Floats use shortest round-trip decimals. Plot tables are CSV with a
//! one-line header `iteration,lambda_mean,mean_discrepancy,var_real,var_gen`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LdganError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: usize,
    /// Mean of the current discriminant eigenvalues.
    pub lambda_mean: f64,
    /// Distance between real and generated batch means in data space.
    pub mean_discrepancy: f64,
    /// Mean per-feature variance of hidden features, by source.
    pub var_real: f64,
    pub var_gen: f64,
    pub i_d: usize,
    pub i_g: usize,
    /// Elapsed time since the run started; zero unless wall-clock capture is enabled.
    pub wall_seconds: f64,
}

impl MetricsRecord {
    pub fn is_finite(&self) -> bool {
        [
            self.lambda_mean,
            self.mean_discrepancy,
            self.var_real,
            self.var_gen,
            self.wall_seconds,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    pub fn to_json_line(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| LdganError::Format(e.to_string()))
    }
}

/// Appends records to a JSON-lines file as they arrive.
pub struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(MetricsWriter {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        writeln!(self.out, "{}", record.to_json_line()?)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_metrics(records: &[MetricsRecord], path: &Path) -> Result<()> {
    let mut w = MetricsWriter::create(path)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| LdganError::Format(format!("metrics line {}: {e}", n + 1)))?,
        );
    }
    Ok(out)
}

pub const PLOT_TABLE_FILE: &str = "training_curves.csv";
const PLOT_HEADER: &str = "iteration,lambda_mean,mean_discrepancy,var_real,var_gen";

/// One plot-table row.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub iteration: usize,
    pub lambda_mean: f64,
    pub mean_discrepancy: f64,
    pub var_real: f64,
    pub var_gen: f64,
}

impl From<&MetricsRecord> for PlotRow {
    fn from(r: &MetricsRecord) -> Self {
        PlotRow {
            iteration: r.iteration,
            lambda_mean: r.lambda_mean,
            mean_discrepancy: r.mean_discrepancy,
            var_real: r.var_real,
            var_gen: r.var_gen,
        }
    }
}

/// Writes the plot table into `out_dir` and returns the paths written.
pub fn export_plot_tables(records: &[MetricsRecord], out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(PLOT_TABLE_FILE);
    let mut out = BufWriter::new(File::create(&path)?);
    writeln!(out, "{PLOT_HEADER}")?;
    for r in records {
        // `{}` on f64 prints the shortest string that parses back to the same value
        writeln!(
            out,
            "{},{},{},{},{}",
            r.iteration, r.lambda_mean, r.mean_discrepancy, r.var_real, r.var_gen
        )?;
    }
    out.flush()?;
    Ok(vec![path])
}

pub fn read_plot_table(path: &Path) -> Result<Vec<PlotRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == PLOT_HEADER => {}
        other => {
            return Err(LdganError::Format(format!(
                "unexpected plot-table header {other:?}"
            )))
        }
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(LdganError::Format(format!("bad plot-table row {line:?}")));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| LdganError::Format(format!("{s:?}: {e}")))
            };
            Ok(PlotRow {
                iteration: f[0]
                    .parse()
                    .map_err(|e| LdganError::Format(format!("{:?}: {e}", f[0])))?,
                lambda_mean: num(f[1])?,
                mean_discrepancy: num(f[2])?,
                var_real: num(f[3])?,
                var_gen: num(f[4])?,
            })
        })
        .collect()
}
