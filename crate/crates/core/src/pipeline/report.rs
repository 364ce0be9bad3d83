use std::path::Path;

use serde::Serialize;

use super::FrcCurve;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct OrderScanRow {
    #[serde(rename = "N")]
    pub order: usize,
    pub train_error: f64,
    pub test_error: Option<f64>,
}

pub(super) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(super) fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

/// Serializes `rows` to CSV with a header from the field names.
pub fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Parse(format!("{}: {e}", path.display()))
}

#[derive(Serialize)]
struct FrcRow {
    f: f64,
    #[serde(rename = "Omega")]
    omega: f64,
    rho0: f64,
    psi0: f64,
    stable: bool,
    branch: i8,
}

pub(super) fn write_frc(path: &Path, curves: &[FrcCurve]) -> Result<()> {
    let rows: Vec<FrcRow> = curves
        .iter()
        .flat_map(|c| {
            c.points.iter().map(move |p| FrcRow {
                f: c.f,
                omega: p.omega,
                rho0: p.rho0,
                psi0: p.psi0,
                stable: p.stable,
                branch: p.branch,
            })
        })
        .collect();
    write_csv_rows(path, &rows)
}

#[derive(Serialize)]
struct BackboneRow {
    rho: f64,
    omega: f64,
}

pub(super) fn write_backbone(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    let rows: Vec<BackboneRow> = points.iter().map(|&(rho, omega)| BackboneRow { rho, omega }).collect();
    write_csv_rows(path, &rows)
}
