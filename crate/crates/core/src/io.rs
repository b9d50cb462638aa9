//! CSV matrices and vectors.
//!
//! One matrix row per line, no header. Values are written with 17 significant
//! digits in scientific notation, so every `f64` round-trips exactly.
//! Vectors are single-column files.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message,
    }
}

pub fn parse_matrix_csv<R: Read>(reader: R, origin: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(origin, e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(origin, format!("row {}: cannot parse {f:?}", line + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    origin,
                    format!(
                        "row {} has {} fields, expected {}",
                        line + 1,
                        row.len(),
                        first.len()
                    ),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(parse_err(origin, "empty matrix".into()));
    }
    let (m, n) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let file = File::open(path).map_err(io_err(path))?;
    parse_matrix_csv(file, path)
}

pub fn read_vector_csv(path: &Path) -> Result<DVector<f64>> {
    let mat = read_matrix_csv(path)?;
    if mat.ncols() != 1 {
        return Err(parse_err(
            path,
            format!("expected one column, found {}", mat.ncols()),
        ));
    }
    Ok(mat.column(0).into_owned())
}

pub fn matrix_to_csv(mat: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in mat.row_iter() {
        let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

pub fn write_matrix_csv(path: &Path, mat: &DMatrix<f64>) -> Result<()> {
    write_text(path, &matrix_to_csv(mat))
}

pub fn write_vector_csv(path: &Path, v: &DVector<f64>) -> Result<()> {
    write_text(
        path,
        &matrix_to_csv(&DMatrix::from_column_slice(v.len(), 1, v.as_slice())),
    )
}
