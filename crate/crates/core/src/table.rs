//! Small CSV helpers shared by the dataset, feature and prediction files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A parsed CSV file: header names plus rows tagged with their 1-based line number.
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn require(&self, path: &Path, name: &str) -> Result<usize> {
        self.column(name).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("missing column `{}`", name),
        })
    }

    /// Indices of the contiguous numbered columns `{prefix}0, {prefix}1, ...`.
    pub fn numbered(&self, path: &Path, prefix: &str) -> Result<Vec<usize>> {
        let mut cols = Vec::new();
        while let Some(c) = self.column(&format!("{}{}", prefix, cols.len())) {
            cols.push(c);
        }
        if cols.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: format!("no `{}0..` feature columns", prefix),
            });
        }
        Ok(cols)
    }
}

pub fn read(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != headers.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(Table { headers, rows })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("{:?}", kind),
        },
    }
}

pub fn parse<T: std::str::FromStr>(path: &Path, line: usize, column: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("column `{}`: cannot parse `{}`", column, raw),
    })
}

/// Writes a header and rows; floats are formatted with Rust's shortest
/// round-trip representation so reading back is bit-exact.
pub fn write<I, R>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: AsRef<[String]>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for r in rows {
        writeln!(w, "{}", r.as_ref().join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn numbered_header(fixed: &[&str], prefix: &str, n: usize) -> Vec<String> {
    fixed
        .iter()
        .map(|s| s.to_string())
        .chain((0..n).map(|i| format!("{}{}", prefix, i)))
        .collect()
}

pub fn fmt_f64(v: f64) -> String {
    format!("{}", v)
}

pub fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}
