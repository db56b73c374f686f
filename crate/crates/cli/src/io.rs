//! Dataset files: the `m3a` text format and IDX unsigned-byte images.
//!
//! `m3a` is line 1 `n p N`, then `N` blocks of `n` lines holding `p`
//! space-separated values, with blocks separated by a blank line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use matfa::{DataSet, MatrixObservation};
use nalgebra::DMatrix;

use crate::CliError;

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    M3a,
    Idx,
}

impl FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "m3a" => Ok(Format::M3a),
            "idx" => Ok(Format::Idx),
            other => Err(CliError::Args(format!("unknown data format '{other}' (expected m3a or idx)"))),
        }
    }
}

impl std::fmt::Display for Format {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Format::M3a => "m3a",
            Format::Idx => "idx",
        })
    }
}

fn parse_error(offset: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("byte offset {offset}: {msg}"))
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

pub fn load_dataset(path: &Path, format: Format) -> Result<DataSet, CliError> {
    let bytes = read(path)?;
    let matrices = match format {
        Format::M3a => parse_m3a(&bytes)?,
        Format::Idx => parse_idx_images(&bytes)?,
    };
    let obs = matrices
        .into_iter()
        .map(MatrixObservation::new)
        .collect::<matfa::Result<Vec<_>>>()
        .map_err(|e| CliError::Data(e.to_string()))?;
    DataSet::new(obs).map_err(|e| CliError::Data(e.to_string()))
}

/// Lines with the byte offset at which each starts.
fn lines_with_offsets(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut offset = 0;
    text.split('\n').map(move |line| {
        let start = offset;
        offset += line.len() + 1;
        (start, line.strip_suffix('\r').unwrap_or(line))
    })
}

pub fn parse_m3a(bytes: &[u8]) -> Result<Vec<DMatrix<f64>>, CliError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| parse_error(e.valid_up_to(), "file is not valid UTF-8"))?;
    let mut lines = lines_with_offsets(text);
    let (_, header) = lines.next().unwrap_or((0, ""));
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| parse_error(0, format!("bad header field '{t}'"))))
        .collect::<Result<_, _>>()?;
    let [n, p, count] = dims[..] else {
        return Err(parse_error(0, format!("header must be 'n p N', found '{header}'")));
    };
    if n == 0 || p == 0 || count == 0 {
        return Err(parse_error(0, "header dimensions must be positive"));
    }

    let mut matrices = Vec::with_capacity(count);
    let mut current = Vec::with_capacity(n * p);
    let mut rows_in_block = 0;
    let mut end = header.len();
    for (offset, line) in lines {
        if offset >= text.len() {
            break;
        }
        end = offset + line.len();
        if line.trim().is_empty() {
            if rows_in_block != 0 {
                return Err(parse_error(offset, format!("block ended after {rows_in_block} of {n} rows")));
            }
            continue;
        }
        if matrices.len() == count {
            return Err(parse_error(offset, format!("payload continues past the {count} declared observations")));
        }
        let mut fields = 0;
        let mut col_offset = offset;
        for token in line.split(' ').filter(|t| !t.is_empty()) {
            let pos = offset + (token.as_ptr() as usize - line.as_ptr() as usize);
            col_offset = pos;
            let v: f64 = token.parse().map_err(|_| parse_error(pos, format!("'{token}' is not a number")))?;
            current.push(v);
            fields += 1;
        }
        if fields != p {
            return Err(parse_error(col_offset, format!("row has {fields} values, expected {p}")));
        }
        rows_in_block += 1;
        if rows_in_block == n {
            matrices.push(DMatrix::from_row_slice(n, p, &current));
            current.clear();
            rows_in_block = 0;
        }
    }
    if matrices.len() != count || rows_in_block != 0 {
        return Err(parse_error(
            end,
            format!("payload truncated: {} complete observations of {count} declared", matrices.len()),
        ));
    }
    Ok(matrices)
}

pub fn write_m3a(matrices: &[DMatrix<f64>]) -> String {
    let (n, p) = matrices.first().map_or((0, 0), |m| m.shape());
    let mut out = format!("{n} {p} {}\n", matrices.len());
    for (i, m) in matrices.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for row in m.row_iter() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    }
    out
}

pub fn save_dataset(path: &Path, data: &DataSet) -> Result<(), CliError> {
    let matrices: Vec<_> = data.observations().iter().map(|x| x.values().clone()).collect();
    fs::write(path, write_m3a(&matrices)).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32, CliError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| parse_error(offset, "header truncated"))
}

/// IDX image file (magic `0x00000803`); pixels are rescaled by `1/255`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<DMatrix<f64>>, CliError> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES {
        return Err(parse_error(0, format!("magic {magic:#010x} is not an unsigned-byte image file")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    if rows == 0 || cols == 0 {
        return Err(parse_error(8, "image dimensions must be positive"));
    }
    let payload = &bytes[16..];
    let expected = count * rows * cols;
    if payload.len() != expected {
        return Err(parse_error(
            16 + payload.len().min(expected),
            format!("payload has {} bytes, header implies {expected}", payload.len()),
        ));
    }
    Ok(payload
        .chunks_exact(rows * cols)
        .map(|px| DMatrix::from_row_iterator(rows, cols, px.iter().map(|&b| f64::from(b) / 255.0)))
        .collect())
}

/// Inverse of [`parse_idx_images`]; values are rounded to the nearest of 256 levels.
pub fn write_idx_images(matrices: &[DMatrix<f64>]) -> Vec<u8> {
    let (rows, cols) = matrices.first().map_or((0, 0), |m| m.shape());
    let mut out = Vec::with_capacity(16 + matrices.len() * rows * cols);
    for v in [IDX_IMAGES, matrices.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for m in matrices {
        for row in m.row_iter() {
            out.extend(row.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
        }
    }
    out
}

/// Class labels: an IDX label file (magic `0x00000801`) or one integer per line.
pub fn load_labels(path: &Path) -> Result<Vec<usize>, CliError> {
    let bytes = read(path)?;
    if bytes.len() >= 4 && be_u32(&bytes, 0)? == IDX_LABELS {
        let count = be_u32(&bytes, 4)? as usize;
        if bytes.len() - 8 != count {
            return Err(parse_error(8, format!("{} label bytes, header declares {count}", bytes.len() - 8)));
        }
        return Ok(bytes[8..].iter().map(|&b| usize::from(b)).collect());
    }
    let text = std::str::from_utf8(&bytes).map_err(|e| parse_error(e.valid_up_to(), "labels are not valid UTF-8"))?;
    lines_with_offsets(text)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(offset, l)| l.trim().parse().map_err(|_| parse_error(offset, format!("'{}' is not a label", l.trim()))))
        .collect()
}

pub fn labels_text(labels: &[usize]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}
