//! LibSVM sparse text format: one `label idx:value ...` line per row with 1-based
//! feature indices. Labels `≤ 0` map to 0 and positive labels to 1.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use meanfield::linalg::Matrix;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<u8>,
}

/// Reads a LibSVM file. The width is `width` if given (larger indices are an
/// error), otherwise the largest index present.
pub fn read_libsvm(path: &Path, width: Option<usize>) -> CliResult<Dataset> {
    let file = File::open(path)?;
    parse_libsvm(BufReader::new(file), width, &path.display().to_string())
}

pub fn parse_libsvm<R: BufRead>(reader: R, width: Option<usize>, source: &str) -> CliResult<Dataset> {
    let parse_error = |line: usize, message: String| CliError::Parse { path: source.to_string(), line, message };
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0usize;
    for (number, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = number + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_token = tokens.next().expect("non-empty line has a token");
        let label: f64 =
            label_token.parse().map_err(|_| parse_error(line_no, format!("invalid label '{label_token}'")))?;
        let mut entries = Vec::new();
        for token in tokens {
            let (idx, value) = token
                .split_once(':')
                .ok_or_else(|| parse_error(line_no, format!("expected 'index:value', got '{token}'")))?;
            let idx: usize = idx.parse().map_err(|_| parse_error(line_no, format!("invalid feature index '{idx}'")))?;
            if idx == 0 {
                return Err(parse_error(line_no, "feature indices are 1-based".to_string()));
            }
            let value: f64 =
                value.parse().map_err(|_| parse_error(line_no, format!("invalid feature value '{value}'")))?;
            if let Some(w) = width {
                if idx > w {
                    return Err(parse_error(line_no, format!("feature index {idx} exceeds width {w}")));
                }
            }
            max_index = max_index.max(idx);
            entries.push((idx - 1, value));
        }
        labels.push(u8::from(label > 0.0));
        rows.push(entries);
    }
    let p = width.unwrap_or(max_index);
    let mut x = Matrix::zeros(rows.len(), p);
    for (i, entries) in rows.iter().enumerate() {
        for &(j, v) in entries {
            x[(i, j)] = v;
        }
    }
    Ok(Dataset { x, y: labels })
}

/// Writes non-zero entries with shortest round-trip float formatting.
pub fn write_libsvm<W: Write>(mut out: W, data: &Dataset) -> CliResult<()> {
    for (i, &label) in data.y.iter().enumerate() {
        write!(out, "{}", if label == 1 { "1" } else { "-1" })?;
        for (j, v) in data.x.row(i).iter().enumerate() {
            if *v != 0.0 {
                write!(out, " {}:{:?}", j + 1, v)?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}
