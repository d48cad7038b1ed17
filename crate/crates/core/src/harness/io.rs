//! Matrix and trace file formats.
//!
//! * MatrixMarket: `coordinate` files (real, integer or pattern; general or
//!   symmetric) load as sparse with duplicates summed; `array` files load as dense.
//! * CSV: one matrix row per line, comma separated.
//! * raw: little-endian `u64 rows`, `u64 cols`, then `rows * cols` `f64` values in row-major order.
//! * Trace CSV: `outer_iter,elapsed_s,error,w_inner,h_inner`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::accel::TraceSample;
use crate::error::{NmfError, Result};
use crate::linalg::{DenseMatrix, Matrix, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    MatrixMarket,
    DenseCsv,
    RawF64,
}

impl FromStr for MatrixFormat {
    type Err = NmfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mm" | "mtx" | "matrix-market" => Ok(MatrixFormat::MatrixMarket),
            "csv" | "dense-csv" => Ok(MatrixFormat::DenseCsv),
            "raw" | "raw-f64" => Ok(MatrixFormat::RawF64),
            other => Err(NmfError::InvalidConfig(format!("unknown matrix format '{other}'"))),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> NmfError + '_ {
    move |source| NmfError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> NmfError {
    NmfError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<Matrix> {
    match format {
        MatrixFormat::MatrixMarket => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            parse_matrix_market(&text, path)
        }
        MatrixFormat::DenseCsv => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            parse_dense_csv(&text, path).map(Matrix::Dense)
        }
        MatrixFormat::RawF64 => {
            let bytes = fs::read(path).map_err(io_err(path))?;
            parse_raw(&bytes, path).map(Matrix::Dense)
        }
    }
}

fn parse_number<T: FromStr>(tok: &str, path: &Path, line: usize, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse {what} '{tok}'")))
}

/// Parses MatrixMarket text. `path` is used for error messages only.
pub fn parse_matrix_market(text: &str, path: &Path) -> Result<Matrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, banner) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let banner_lc = banner.to_ascii_lowercase();
    let fields: Vec<&str> = banner_lc.split_whitespace().collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(parse_err(path, 1, "missing '%%MatrixMarket matrix' banner"));
    }
    let layout = fields[2];
    let field = fields[3];
    let symmetry = fields[4];
    if !matches!(field, "real" | "integer" | "pattern" | "double") {
        return Err(parse_err(path, 1, format!("unsupported field '{field}'")));
    }
    if !matches!(symmetry, "general" | "symmetric") {
        return Err(parse_err(path, 1, format!("unsupported symmetry '{symmetry}'")));
    }
    let symmetric = symmetry == "symmetric";

    let mut data = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = data
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing size line"))?;
    let dims: Vec<&str> = size.split_whitespace().collect();

    match layout {
        "coordinate" => {
            if dims.len() != 3 {
                return Err(parse_err(path, size_line, "size line must be 'rows cols nnz'"));
            }
            let rows: usize = parse_number(dims[0], path, size_line, "row count")?;
            let cols: usize = parse_number(dims[1], path, size_line, "column count")?;
            let nnz: usize = parse_number(dims[2], path, size_line, "entry count")?;
            let mut triplets = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
            let mut count = 0;
            for (line, text) in data {
                let toks: Vec<&str> = text.split_whitespace().collect();
                let needed = if field == "pattern" { 2 } else { 3 };
                if toks.len() < needed {
                    return Err(parse_err(path, line, format!("expected {needed} fields")));
                }
                let i: usize = parse_number(toks[0], path, line, "row index")?;
                let j: usize = parse_number(toks[1], path, line, "column index")?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(parse_err(
                        path,
                        line,
                        format!("index ({i}, {j}) outside declared {rows}x{cols}"),
                    ));
                }
                let v: f64 = if field == "pattern" {
                    1.0
                } else {
                    parse_number(toks[2], path, line, "value")?
                };
                if !(v >= 0.0) {
                    return Err(NmfError::NegativeEntry {
                        path: path.to_path_buf(),
                        line,
                        row: i,
                        col: j,
                        value: v,
                    });
                }
                triplets.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    triplets.push((j - 1, i - 1, v));
                }
                count += 1;
            }
            if count != nnz {
                return Err(parse_err(
                    path,
                    size_line,
                    format!("header declares {nnz} entries, found {count}"),
                ));
            }
            Ok(Matrix::Sparse(SparseMatrix::from_triplets(rows, cols, triplets)?))
        }
        "array" => {
            if dims.len() != 2 {
                return Err(parse_err(path, size_line, "size line must be 'rows cols'"));
            }
            let rows: usize = parse_number(dims[0], path, size_line, "row count")?;
            let cols: usize = parse_number(dims[1], path, size_line, "column count")?;
            let mut m = DenseMatrix::zeros(rows, cols);
            // Column-major order; symmetric arrays store the lower triangle only.
            let positions: Vec<(usize, usize)> = (0..cols)
                .flat_map(|j| {
                    let start = if symmetric { j } else { 0 };
                    (start..rows).map(move |i| (i, j))
                })
                .collect();
            let mut count = 0;
            for (line, text) in data {
                let Some(&(i, j)) = positions.get(count) else {
                    return Err(parse_err(path, line, "more values than the declared size"));
                };
                let v: f64 = parse_number(text.trim(), path, line, "value")?;
                if !(v >= 0.0) {
                    return Err(NmfError::NegativeEntry {
                        path: path.to_path_buf(),
                        line,
                        row: i + 1,
                        col: j + 1,
                        value: v,
                    });
                }
                m[(i, j)] = v;
                if symmetric {
                    m[(j, i)] = v;
                }
                count += 1;
            }
            if count != positions.len() {
                return Err(parse_err(
                    path,
                    size_line,
                    format!("header declares {} values, found {count}", positions.len()),
                ));
            }
            Ok(Matrix::Dense(m))
        }
        other => Err(parse_err(path, 1, format!("unsupported layout '{other}'"))),
    }
}

pub fn parse_dense_csv(text: &str, path: &Path) -> Result<DenseMatrix> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut count = 0;
        for tok in t.split(',') {
            let v: f64 = parse_number(tok.trim(), path, line, "value")?;
            if !(v >= 0.0) {
                return Err(NmfError::NegativeEntry {
                    path: path.to_path_buf(),
                    line,
                    row: rows + 1,
                    col: count + 1,
                    value: v,
                });
            }
            data.push(v);
            count += 1;
        }
        match cols {
            None => cols = Some(count),
            Some(c) if c != count => {
                return Err(parse_err(path, line, format!("expected {c} values, found {count}")));
            }
            _ => {}
        }
        rows += 1;
    }
    DenseMatrix::new(rows, cols.unwrap_or(0), data)
}

pub fn parse_raw(bytes: &[u8], path: &Path) -> Result<DenseMatrix> {
    if bytes.len() < 16 {
        return Err(parse_err(path, 0, "raw file shorter than its 16-byte header"));
    }
    let rows = u64::from_le_bytes(bytes[0..8].try_into().expect("8 bytes")) as usize;
    let cols = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if body.len() != rows * cols * 8 {
        return Err(parse_err(
            path,
            0,
            format!("header declares {rows}x{cols} but body has {} bytes", body.len()),
        ));
    }
    let data: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let m = DenseMatrix::new(rows, cols, data)?;
    if let Some((i, j, v)) = m.first_negative() {
        return Err(NmfError::NegativeEntry {
            path: path.to_path_buf(),
            line: 0,
            row: i + 1,
            col: j + 1,
            value: v,
        });
    }
    Ok(m)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

/// Writes a matrix in MatrixMarket coordinate format (general, real).
pub fn write_matrix_market(path: &Path, m: &Matrix) -> Result<()> {
    let s = match m {
        Matrix::Sparse(s) => s.clone(),
        Matrix::Dense(d) => SparseMatrix::from_dense(d)?,
    };
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    out.push_str(&format!("{} {} {}\n", s.rows(), s.cols(), s.nnz()));
    for i in 0..s.rows() {
        let (idx, vals) = s.row(i);
        for (&j, &v) in idx.iter().zip(vals) {
            out.push_str(&format!("{} {} {}\n", i + 1, j + 1, v));
        }
    }
    write_file(path, out.as_bytes())
}

pub fn write_dense_csv(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

pub fn write_raw(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut out = Vec::with_capacity(16 + 8 * m.as_slice().len());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    write_file(path, &out)
}

pub const TRACE_HEADER: &str = "outer_iter,elapsed_s,error,w_inner,h_inner";

/// Writes trace samples. Floats use the shortest representation that parses back exactly.
pub fn write_trace_csv(path: &Path, samples: &[TraceSample]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{TRACE_HEADER}").expect("write to Vec");
    for s in samples {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.outer_iter, s.elapsed_s, s.error, s.w_inner, s.h_inner
        )
        .expect("write to Vec");
    }
    write_file(path, &out)
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceSample>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRACE_HEADER => {}
        _ => return Err(parse_err(path, 1, format!("expected header '{TRACE_HEADER}'"))),
    }
    let mut samples = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = raw.split(',').map(str::trim).collect();
        if toks.len() != 5 {
            return Err(parse_err(path, line, "expected 5 columns"));
        }
        samples.push(TraceSample {
            outer_iter: parse_number(toks[0], path, line, "outer_iter")?,
            elapsed_s: parse_number(toks[1], path, line, "elapsed_s")?,
            error: parse_number(toks[2], path, line, "error")?,
            w_inner: parse_number(toks[3], path, line, "w_inner")?,
            h_inner: parse_number(toks[4], path, line, "h_inner")?,
        });
    }
    Ok(samples)
}

pub const CURVE_HEADER: &str = "t,mean_E,min_E,max_E";

pub fn write_curve_csv(path: &Path, points: &[super::CurvePoint]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{CURVE_HEADER}").expect("write to Vec");
    for p in points {
        writeln!(out, "{},{},{},{}", p.t, p.mean, p.min, p.max).expect("write to Vec");
    }
    write_file(path, &out)
}

/// Writes `key=value` lines.
pub fn write_summary(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let mut out = String::new();
    for (k, v) in entries {
        out.push_str(&format!("{k}={v}\n"));
    }
    write_file(path, out.as_bytes())
}

pub(crate) fn path_for(dir: &Path, name: &str) -> PathBuf {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    dir.join(clean)
}
