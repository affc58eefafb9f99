//! Matrix Market text reader and writer for dense matrices and blocks.
//!
//! Writers emit the `array` format; the system matrix is written with
//! `symmetric` symmetry (lower triangle, column-major), blocks as `general`.
//! Readers accept `array` and `coordinate` formats with `real`, `double`,
//! `integer` or `rational` fields. The `rational` field is an extension:
//! each entry is written as `numerator/denominator`.

use std::io::{BufRead, Write};

use crate::dense::{DenseBlock, SpdMatrix};
use crate::error::{Error, Result};
use crate::scalar::{Rational, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Array,
    Coordinate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

struct Header {
    format: Format,
    symmetry: Symmetry,
}

fn field_name<T: Scalar>() -> &'static str {
    T::FIELD
}

pub fn write_matrix<T: Scalar, W: Write>(mut w: W, a: &SpdMatrix<T>) -> Result<()> {
    let n = a.n();
    writeln!(w, "%%MatrixMarket matrix array {} symmetric", field_name::<T>())?;
    writeln!(w, "{n} {n}")?;
    for j in 0..n {
        for i in j..n {
            writeln!(w, "{}", a.get(i, j).render())?;
        }
    }
    Ok(())
}

pub fn write_block<T: Scalar, W: Write>(mut w: W, d: &DenseBlock<T>) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix array {} general", field_name::<T>())?;
    writeln!(w, "{} {}", d.rows(), d.cols())?;
    for v in d.col_major() {
        writeln!(w, "{}", v.render())?;
    }
    Ok(())
}

/// Writes a vector as an `n × 1` block.
pub fn write_vector<T: Scalar, W: Write>(w: W, v: &[T]) -> Result<()> {
    let block = DenseBlock::from_col_major(v.len(), 1, v.to_vec())?;
    write_block(w, &block)
}

fn parse_entry<T: Scalar>(tok: &str, line: usize) -> Result<T> {
    if let Some(v) = T::parse(tok) {
        return Ok(v);
    }
    if let Ok(v) = tok.parse::<f64>() {
        if v.is_finite() {
            return Ok(T::from_f64(v));
        }
    }
    if let Some(q) = <Rational as Scalar>::parse(tok) {
        return Ok(T::from_f64(Scalar::to_f64(&q)));
    }
    Err(Error::Parse {
        line,
        reason: format!("cannot parse entry {tok:?}"),
    })
}

fn parse_header(line: &str) -> Result<Header> {
    let toks: Vec<String> = line.split_whitespace().map(str::to_ascii_lowercase).collect();
    if toks.len() != 5 || toks[0] != "%%matrixmarket" || toks[1] != "matrix" {
        return Err(Error::Parse {
            line: 1,
            reason: "missing %%MatrixMarket matrix header".into(),
        });
    }
    let format = match toks[2].as_str() {
        "array" => Format::Array,
        "coordinate" => Format::Coordinate,
        other => {
            return Err(Error::Parse {
                line: 1,
                reason: format!("unsupported format {other}"),
            })
        }
    };
    match toks[3].as_str() {
        "real" | "double" | "integer" | "rational" => {}
        other => {
            return Err(Error::Parse {
                line: 1,
                reason: format!("unsupported field {other}"),
            })
        }
    }
    let symmetry = match toks[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => {
            return Err(Error::Parse {
                line: 1,
                reason: format!("unsupported symmetry {other}"),
            })
        }
    };
    Ok(Header { format, symmetry })
}

fn parse_usize(tok: Option<&str>, line: usize) -> Result<usize> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| Error::Parse {
        line,
        reason: "expected a non-negative integer".into(),
    })
}

/// Reads any supported file into a `rows × cols` column-major grid.
fn read_dense<T: Scalar, R: BufRead>(r: R) -> Result<(usize, usize, Vec<T>)> {
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
    let header = match lines.next() {
        Some((_, l)) => parse_header(&l?)?,
        None => {
            return Err(Error::Parse {
                line: 1,
                reason: "empty file".into(),
            })
        }
    };
    let mut body = lines.filter_map(|(no, l)| match l {
        Ok(s) => {
            let t = s.trim().to_string();
            (!t.is_empty() && !t.starts_with('%')).then_some(Ok((no, t)))
        }
        Err(e) => Some(Err(Error::from(e))),
    });
    let (size_line, size) = body.next().transpose()?.ok_or(Error::Parse {
        line: 2,
        reason: "missing size line".into(),
    })?;
    let mut toks = size.split_whitespace();
    let rows = parse_usize(toks.next(), size_line)?;
    let cols = parse_usize(toks.next(), size_line)?;
    let mut data = vec![T::zero(); rows * cols];
    let symmetric = header.symmetry == Symmetry::Symmetric;
    if symmetric && rows != cols {
        return Err(Error::Parse {
            line: size_line,
            reason: "symmetric matrix must be square".into(),
        });
    }

    match header.format {
        Format::Array => {
            let mut positions = Vec::with_capacity(rows * cols);
            for j in 0..cols {
                let start = if symmetric { j } else { 0 };
                for i in start..rows {
                    positions.push((i, j));
                }
            }
            let mut next = positions.into_iter();
            for item in body {
                let (no, l) = item?;
                for tok in l.split_whitespace() {
                    let (i, j) = next.next().ok_or(Error::Parse {
                        line: no,
                        reason: "too many entries".into(),
                    })?;
                    let v: T = parse_entry(tok, no)?;
                    if symmetric && i != j {
                        data[i * cols + j] = v.clone();
                    }
                    data[j * rows + i] = v;
                }
            }
            if next.next().is_some() {
                return Err(Error::Parse {
                    line: 0,
                    reason: "too few entries".into(),
                });
            }
        }
        Format::Coordinate => {
            let nnz = parse_usize(toks.next(), size_line)?;
            let mut seen = 0;
            for item in body {
                let (no, l) = item?;
                let mut t = l.split_whitespace();
                let i = parse_usize(t.next(), no)?;
                let j = parse_usize(t.next(), no)?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(Error::Parse {
                        line: no,
                        reason: format!("index ({i}, {j}) out of range"),
                    });
                }
                let tok = t.next().ok_or(Error::Parse {
                    line: no,
                    reason: "missing value".into(),
                })?;
                let v: T = parse_entry(tok, no)?;
                let (i, j) = (i - 1, j - 1);
                if symmetric && i != j {
                    data[i * rows + j] = v.clone();
                }
                data[j * rows + i] = v;
                seen += 1;
            }
            if seen != nnz {
                return Err(Error::Parse {
                    line: 0,
                    reason: format!("expected {nnz} entries, found {seen}"),
                });
            }
        }
    }
    Ok((rows, cols, data))
}

pub fn read_matrix<T: Scalar, R: BufRead>(r: R) -> Result<SpdMatrix<T>> {
    let (rows, cols, data) = read_dense::<T, R>(r)?;
    if rows != cols {
        return Err(Error::DimensionMismatch {
            context: "system matrix must be square",
            expected: rows,
            actual: cols,
        });
    }
    // column-major and row-major agree up to transposition; symmetrization is
    // left to the constructor
    let mut row_major = vec![T::zero(); rows * rows];
    for j in 0..rows {
        for i in 0..rows {
            row_major[i * rows + j] = data[j * rows + i].clone();
        }
    }
    SpdMatrix::new(rows, row_major)
}

pub fn read_block<T: Scalar, R: BufRead>(r: R) -> Result<DenseBlock<T>> {
    let (rows, cols, data) = read_dense::<T, R>(r)?;
    DenseBlock::from_col_major(rows, cols, data)
}

pub fn read_vector<T: Scalar, R: BufRead>(r: R) -> Result<Vec<T>> {
    let b = read_block::<T, R>(r)?;
    if b.cols() != 1 {
        return Err(Error::DimensionMismatch {
            context: "vector file columns",
            expected: 1,
            actual: b.cols(),
        });
    }
    Ok(b.col(0).to_vec())
}
