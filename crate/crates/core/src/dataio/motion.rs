use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Six head-motion parameters per scan, in file column order.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionRegressors {
    rows: Vec<[f64; 6]>,
}

impl MotionRegressors {
    pub fn new(rows: Vec<[f64; 6]>) -> Self {
        Self { rows }
    }

    pub fn zeros(nt: usize) -> Self {
        Self { rows: vec![[0.0; 6]; nt] }
    }

    pub fn nt(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[[f64; 6]] {
        &self.rows
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[c]).collect()
    }
}

pub fn parse_motion_tsv(text: &str, nt: usize) -> Result<MotionRegressors> {
    let mut rows = Vec::with_capacity(nt);
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(['\t', ' ']).filter(|s| !s.is_empty()).collect();
        if fields.len() != 6 {
            return Err(Error::Validation(format!("motion line {lineno}: {} columns, expected 6", fields.len())));
        }
        let mut row = [0.0; 6];
        for (slot, f) in row.iter_mut().zip(&fields) {
            *slot = f
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Validation(format!("motion line {lineno}: bad value '{f}'")))?;
        }
        rows.push(row);
    }
    if rows.len() != nt {
        return Err(Error::Validation(format!("motion file has {} rows, expected {nt}", rows.len())));
    }
    Ok(MotionRegressors { rows })
}

pub fn read_motion_tsv(path: impl AsRef<Path>, nt: usize) -> Result<MotionRegressors> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_motion_tsv(&text, nt).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

pub fn format_motion_tsv(motion: &MotionRegressors) -> String {
    let mut out = String::new();
    for r in motion.rows() {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", cells.join("\t")).unwrap();
    }
    out
}

pub fn write_motion_tsv(path: impl AsRef<Path>, motion: &MotionRegressors) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_motion_tsv(motion)).map_err(|e| Error::io(path, e))
}
