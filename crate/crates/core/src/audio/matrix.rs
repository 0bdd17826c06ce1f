//! Portable plain-text matrix export: a header line `rows cols sample_rate hop`
//! followed by row-major whitespace-separated values.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{AudioError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub rows: Vec<Vec<f64>>,
    pub sample_rate: u32,
    pub hop: usize,
}

pub fn write_matrix(path: impl AsRef<Path>, rows: &[Vec<f64>], sample_rate: u32, hop: usize) -> Result<()> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(AudioError::MalformedMatrix("ragged rows".into()));
    }
    let mut out = format!("{} {} {} {}\n", rows.len(), cols, sample_rate, hop);
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<MatrixFile> {
    let text = fs::read_to_string(path)?;
    let mut tokens = text.split_whitespace();
    let mut header = |name: &str| -> Result<usize> {
        tokens
            .next()
            .ok_or_else(|| AudioError::MalformedMatrix(format!("missing {name}")))?
            .parse()
            .map_err(|_| AudioError::MalformedMatrix(format!("bad {name}")))
    };
    let rows = header("rows")?;
    let cols = header("cols")?;
    let sample_rate = header("sample_rate")? as u32;
    let hop = header("hop")?;
    let values: Vec<f64> = tokens
        .map(|t| t.parse().map_err(|_| AudioError::MalformedMatrix(format!("bad value {t:?}"))))
        .collect::<Result<_>>()?;
    if values.len() != rows * cols {
        return Err(AudioError::MalformedMatrix(format!(
            "expected {} values, found {}",
            rows * cols,
            values.len()
        )));
    }
    let rows = if cols == 0 { vec![Vec::new(); rows] } else { values.chunks(cols).map(<[f64]>::to_vec).collect() };
    Ok(MatrixFile { rows, sample_rate, hop })
}
