//! LIBSVM text-format ingestion.
//!
//! Each line is `label idx:val idx:val ...` with whitespace-separated tokens,
//! 1-based strictly increasing indices, and a real-valued label that is mapped
//! to +1 (label > 0) or -1 (label <= 0, so 0/1-labeled files map 0 to -1).

use std::io::BufRead;

use crate::error::{Error, Result};
use crate::problem::Dataset;

/// Parses a LIBSVM stream; the dimension is the largest index seen.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<Dataset> {
    parse_libsvm_with_dim(reader, None)
}

/// Parses a LIBSVM stream with an explicit dimension override, used to align
/// train/test feature spaces. Indices beyond the override are rejected.
pub fn parse_libsvm_with_dim<R: BufRead>(
    reader: R,
    dim_override: Option<usize>,
) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    let mut max_index = 0usize; // 1-based

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        let mut tokens = line.split_whitespace();
        let label_tok = match tokens.next() {
            Some(t) => t,
            None => continue, // blank line
        };
        let raw_label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad label token '{label_tok}'"),
        })?;
        labels.push(if raw_label > 0.0 { 1.0 } else { -1.0 });

        let mut row: Vec<(usize, f64)> = Vec::new();
        let mut prev_index = 0usize;
        for tok in tokens {
            let (idx_str, val_str) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("token '{tok}' is not index:value"),
            })?;
            let idx: usize = idx_str.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad feature index '{idx_str}'"),
            })?;
            let val: f64 = val_str.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad feature value '{val_str}'"),
            })?;
            if idx == 0 || idx <= prev_index {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("index {idx} not strictly increasing (1-based)"),
                });
            }
            prev_index = idx;
            row.push((idx - 1, val));
        }
        max_index = max_index.max(prev_index);
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = match dim_override {
        Some(d) => {
            if max_index > d {
                return Err(Error::InvalidArgument(format!(
                    "dimension override {d} smaller than max index {max_index}"
                )));
            }
            d
        }
        None => max_index,
    };
    Dataset::new(rows, labels, dim)
}
