//! CSV and JSON writers and their readers.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::thermo::ThermoCurve;

use super::report::RunReport;

/// Shortest decimal text that parses back to exactly `v`.
pub fn format_float(v: f64) -> String {
    let mut buf = ryu::Buffer::new();
    buf.format(v).to_string()
}

/// Git blob object id of `content`.
pub fn git_blob_hash(content: &str) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content.as_bytes());
    hex::encode(h.finalize())
}

/// Off-diagonal density-matrix entries are written only up to this dimension.
pub const TRACKED_COHERENCE_DIM: usize = 4;

pub fn trajectory_headers(n: usize, m: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..n).map(|k| format!("x{k}")));
    h.extend((0..n).map(|k| format!("v{k}")));
    h.extend((0..m).map(|k| format!("p{k}")));
    if m <= TRACKED_COHERENCE_DIM {
        for i in 0..m {
            for j in i + 1..m {
                h.push(format!("rho{i}{j}_re"));
                h.push(format!("rho{i}{j}_im"));
            }
        }
    }
    h.extend(["e_mean", "q_cum", "w_cum", "s_info", "apparatus_energy"].map(String::from));
    h
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let first = traj.first();
    let (n, m) = (first.x.len(), first.populations.len());
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(trajectory_headers(n, m))?;
    for s in &traj.samples {
        let mut row = vec![s.t];
        row.extend(&s.x);
        row.extend(&s.v);
        row.extend(&s.populations);
        if m <= TRACKED_COHERENCE_DIM {
            for i in 0..m {
                for j in i + 1..m {
                    row.push(s.rho[(i, j)].re);
                    row.push(s.rho[(i, j)].im);
                }
            }
        }
        row.extend([s.ledger.e_mean, s.ledger.heat, s.ledger.work, s.entropy, s.apparatus_energy]);
        w.write_record(row.into_iter().map(format_float))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_thermo_csv(path: &Path, curve: &ThermoCurve, canonical_entropy: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "energy",
        "omega",
        "entropy",
        "temperature",
        "density",
        "identity_residual",
        "canonical_information_entropy",
    ])?;
    for i in 0..curve.energy.len() {
        let row = [
            curve.energy[i],
            curve.omega[i],
            curve.entropy[i],
            curve.temperature[i],
            curve.density[i],
            curve.identity_residual[i],
            canonical_entropy[i],
        ];
        w.write_record(row.map(format_float))?;
    }
    w.flush()?;
    Ok(())
}

/// A numeric CSV file as written by this tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.headers.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn read_csv_table(path: &Path) -> Result<CsvTable> {
    let mut r = csv::Reader::from_path(path)?;
    let headers: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    Error::validation(format!("{}: row {}: {f:?} is not a number", path.display(), line + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() != headers.len() {
            return Err(Error::validation(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                line + 1,
                row.len(),
                headers.len()
            )));
        }
        rows.push(row);
    }
    Ok(CsvTable { headers, rows })
}

pub fn write_report(path: &Path, report: &RunReport) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
