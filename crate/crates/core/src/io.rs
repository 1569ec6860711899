//! Plain-text matrix files: comma-separated, one row per line, no header.
//! Values are written with Rust's shortest round-trip float formatting, so a
//! write/read cycle is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = String::with_capacity(m.len() * 20);
    for row in m.rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

/// Parses CSV text into a matrix; `origin` labels parse errors.
pub fn matrix_from_csv(text: &str, origin: &str) -> Result<Matrix> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut count = 0;
        for (c, field) in line.split(',').enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                column: c + 1,
                message: format!("{origin}: `{}` is not a number", field.trim()),
            })?;
            data.push(v);
            count += 1;
        }
        match cols {
            None => cols = Some(count),
            Some(c) if c != count => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    column: 1,
                    message: format!("{origin}: expected {c} fields, found {count}"),
                })
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    Ok(Array2::from_shape_vec((rows, cols), data).expect("row lengths checked"))
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    fs::write(path, matrix_to_csv(m))?;
    Ok(())
}

/// Reads a matrix file; an empty file yields a `0×0` matrix.
pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path)?;
    matrix_from_csv(&text, &path.display().to_string())
}

/// Reads a square, symmetric matrix (e.g. an externally estimated precision).
pub fn read_symmetric(path: &Path, tol: f64) -> Result<Matrix> {
    let m = read_matrix(path)?;
    let fail = |message: String| Error::Format {
        path: path.display().to_string(),
        message,
    };
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(fail(format!("expected a square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[[i, j]] - m[[j, i]]).abs() > tol {
                return Err(fail(format!("not symmetric at ({i},{j})")));
            }
        }
    }
    Ok(m)
}
