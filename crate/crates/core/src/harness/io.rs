//! Matrix and target ingestion.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixFormat {
    MatrixMarket,
    DenseCsv,
}

impl MatrixFormat {
    /// `.mtx` is MatrixMarket, anything else dense CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("mtx") => Self::MatrixMarket,
            _ => Self::DenseCsv,
        }
    }
}

pub fn load_matrix<T: Real>(path: &Path, format: MatrixFormat) -> Result<SparseMatrix<T>> {
    let text = fs::read_to_string(path)?;
    match format {
        MatrixFormat::MatrixMarket => parse_matrix_market(&text),
        MatrixFormat::DenseCsv => parse_dense_csv(&text),
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parses a MatrixMarket `coordinate` file with 1-based indices. The banner
/// line is optional; only `general` symmetry is accepted.
pub fn parse_matrix_market<T: Real>(text: &str) -> Result<SparseMatrix<T>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut pattern = false;
    let mut size: Option<(usize, usize, usize)> = None;
    for (no, line) in lines.by_ref() {
        if line.is_empty() {
            continue;
        }
        if let Some(banner) = line.strip_prefix("%%MatrixMarket") {
            let fields: Vec<String> = banner.split_whitespace().map(str::to_lowercase).collect();
            if fields.len() != 4 || fields[0] != "matrix" || fields[1] != "coordinate" {
                return Err(parse_err(no, "expected `%%MatrixMarket matrix coordinate <field> <symmetry>`"));
            }
            match fields[2].as_str() {
                "real" | "integer" | "double" => {}
                "pattern" => pattern = true,
                f => return Err(parse_err(no, format!("unsupported field `{f}`"))),
            }
            if fields[3] != "general" {
                return Err(parse_err(no, format!("unsupported symmetry `{}`", fields[3])));
            }
            continue;
        }
        if line.starts_with('%') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let nums: Option<Vec<usize>> = f.iter().map(|s| s.parse().ok()).collect();
        match nums.as_deref() {
            Some(&[r, c, n]) => size = Some((r, c, n)),
            _ => return Err(parse_err(no, "expected `rows cols entries`")),
        }
        break;
    }
    let (n_rows, n_cols, nnz) = size.ok_or_else(|| parse_err(0, "missing size line"))?;
    let mut triplets = Vec::with_capacity(nnz);
    for (no, line) in lines {
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let want = if pattern { 2 } else { 3 };
        if f.len() != want {
            return Err(parse_err(no, format!("expected {want} fields, found {}", f.len())));
        }
        let index = |s: &str, bound: usize, what: &str| -> Result<usize> {
            match s.parse::<usize>() {
                Ok(i) if (1..=bound).contains(&i) => Ok(i - 1),
                _ => Err(parse_err(no, format!("{what} index `{s}` outside 1..={bound}"))),
            }
        };
        let r = index(f[0], n_rows, "row")?;
        let c = index(f[1], n_cols, "column")?;
        let v = if pattern {
            1.0
        } else {
            f[2].parse::<f64>()
                .map_err(|_| parse_err(no, format!("bad value `{}`", f[2])))?
        };
        triplets.push((r, c, T::narrow(v)));
    }
    if triplets.len() != nnz {
        return Err(parse_err(
            text.lines().count(),
            format!("size line declares {nnz} entries, found {}", triplets.len()),
        ));
    }
    SparseMatrix::from_triplets(n_rows, n_cols, &triplets)
}

/// Parses a headerless dense CSV; zeros are dropped.
pub fn parse_dense_csv<T: Real>(text: &str) -> Result<SparseMatrix<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut triplets = Vec::new();
    let mut n_cols = None;
    let mut n_rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(n_rows + 1, |p| p.line() as usize);
        match n_cols {
            None => n_cols = Some(record.len()),
            Some(n) if n != record.len() => {
                return Err(parse_err(line, format!("expected {n} fields, found {}", record.len())))
            }
            _ => {}
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("bad value `{field}`")))?;
            if v != 0.0 {
                triplets.push((n_rows, c, T::narrow(v)));
            }
        }
        n_rows += 1;
    }
    SparseMatrix::from_triplets(n_rows, n_cols.unwrap_or(0), &triplets)
}

pub fn write_matrix_market<T: Real>(x: &SparseMatrix<T>, out: &mut impl Write) -> Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", x.n_rows(), x.n_cols(), x.nnz())?;
    for (r, c, v) in x.triplets() {
        writeln!(out, "{} {} {}", r + 1, c + 1, v)?;
    }
    Ok(())
}

pub fn save_matrix_market<T: Real>(x: &SparseMatrix<T>, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    write_matrix_market(x, &mut f)?;
    f.flush()?;
    Ok(())
}

/// Reads one target per row from the first column of a headerless CSV.
pub fn load_targets<T: Real>(path: &Path) -> Result<Vec<T>> {
    parse_targets(&fs::read_to_string(path)?)
}

pub fn parse_targets<T: Real>(text: &str) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = record.get(0).unwrap_or("");
        let v: f64 = field
            .parse()
            .map_err(|_| parse_err(line, format!("bad target `{field}`")))?;
        out.push(T::narrow(v));
    }
    Ok(out)
}

pub fn write_targets<T: Real>(y: &[T], out: &mut impl Write) -> Result<()> {
    for v in y {
        writeln!(out, "{v}")?;
    }
    Ok(())
}
