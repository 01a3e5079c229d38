//! CSV dumps of spectral quantities for offline inspection.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

/// Row-major CSV with one header line.
pub fn write_matrix_csv(path: impl AsRef<Path>, header: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut out = header.join(",");
    out.push('\n');
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_vector_csv(path: impl AsRef<Path>, header: &str, v: &DVector<f64>) -> Result<()> {
    let mut out = format!("index,{header}\n");
    for (i, x) in v.iter().enumerate() {
        let _ = writeln!(out, "{i},{x}");
    }
    fs::write(path, out)?;
    Ok(())
}
