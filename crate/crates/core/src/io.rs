//! Plain numeric CSV for designs, responses and solutions. Missing entries
//! are written and read as `NA`. A first row that does not parse as numbers
//! is treated as a header and skipped.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MISSING_TOKEN: &str = "NA";

fn parse_cell(s: &str) -> Option<f64> {
    let s = s.trim();
    if s == MISSING_TOKEN {
        Some(f64::NAN)
    } else {
        s.parse().ok()
    }
}

pub fn read_matrix<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let parsed: Option<Vec<f64>> = rec.iter().map(parse_cell).collect();
        match parsed {
            Some(r) => rows.push(r),
            None if i == 0 => continue,
            None => {
                return Err(Error::Parse(format!(
                    "line {}: non-numeric entry in {:?}",
                    i + 1,
                    rec.iter().collect::<Vec<_>>()
                )))
            }
        }
    }
    let ncols = rows.first().map_or(0, |r| r.len());
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::Parse(format!("data row {} has {} columns, expected {ncols}", i + 1, r.len())));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn read_matrix_file(path: &Path) -> Result<DMatrix<f64>> {
    read_matrix(File::open(path)?)
}

/// A single column or a single row.
pub fn read_vector_file(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix_file(path)?;
    if m.ncols() == 1 {
        Ok(m.column(0).into_owned())
    } else if m.nrows() == 1 {
        Ok(m.row(0).transpose())
    } else {
        Err(Error::Parse(format!(
            "{}: expected a single row or column, found {}x{}",
            path.display(),
            m.nrows(),
            m.ncols()
        )))
    }
}

fn cell(v: f64) -> String {
    if v.is_nan() {
        MISSING_TOKEN.to_string()
    } else {
        v.to_string()
    }
}

pub fn write_matrix<W: Write>(w: W, m: &DMatrix<f64>) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for i in 0..m.nrows() {
        wr.write_record(m.row(i).iter().map(|&v| cell(v)))?;
    }
    wr.flush()?;
    Ok(())
}

/// One value per line under a single-column header.
pub fn write_vector<W: Write>(w: W, header: &str, v: &[f64]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([header])?;
    for &x in v {
        wr.write_record([cell(x)])?;
    }
    wr.flush()?;
    Ok(())
}
