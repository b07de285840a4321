//! Tabular outputs shared by the case studies.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of a computed-vs-published comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub quantity: String,
    pub computed: f64,
    pub paper: Option<f64>,
    pub rel_err: Option<f64>,
    pub note: String,
}

impl TableRow {
    pub fn new(quantity: impl Into<String>, computed: f64, paper: Option<f64>, note: impl Into<String>) -> Self {
        let rel_err = paper.map(|p| {
            if p == 0.0 {
                computed.abs()
            } else {
                ((computed - p) / p).abs()
            }
        });
        Self {
            quantity: quantity.into(),
            computed,
            paper,
            rel_err,
            note: note.into(),
        }
    }
}

/// Per-step trajectory row: k, r1, r2, y, z, e, b_k, eps_k, L_k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub k: i64,
    pub r1: f64,
    pub r2: f64,
    pub y: f64,
    pub z: f64,
    pub e: f64,
    pub b_k: f64,
    pub eps_k: f64,
    #[serde(rename = "L_k")]
    pub l_k: f64,
}

/// Serialize rows as CSV with a header line.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}

pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Csv(e.to_string()))
}
