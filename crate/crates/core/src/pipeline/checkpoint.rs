//! Text checkpoint format for named parameter matrices.
//!
//! Layout:
//!
//! ```text
//! subtext-params v1
//! <name> <rows> <cols>
//! <row of `cols` space-separated values>   (× rows)
//! ...
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting,
//! so a load reproduces every bit. Matrix order is preserved.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::numerics::Tensor2D;

const MAGIC: &str = "subtext-params v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a parameter checkpoint (bad header {0:?})")]
    BadHeader(String),
    #[error("malformed checkpoint at line {line}: {message}")]
    Malformed { line: usize, message: String },
}

pub fn write_checkpoint<W: Write>(
    mut writer: W,
    matrices: &[(String, &Tensor2D)],
) -> Result<(), CheckpointError> {
    writeln!(writer, "{MAGIC}")?;
    for (name, tensor) in matrices {
        writeln!(writer, "{name} {} {}", tensor.rows(), tensor.cols())?;
        for r in 0..tensor.rows() {
            let row: Vec<String> = tensor.row(r).iter().map(|v| format!("{v}")).collect();
            writeln!(writer, "{}", row.join(" "))?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(reader: R) -> Result<Vec<(String, Tensor2D)>, CheckpointError> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(CheckpointError::BadHeader(String::new())),
    };
    if header.trim_end() != MAGIC {
        return Err(CheckpointError::BadHeader(header));
    }
    let mut out = Vec::new();
    while let Some((number, line)) = lines.next() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let name = fields
            .next()
            .ok_or_else(|| CheckpointError::Malformed {
                line: number + 1,
                message: "missing matrix name".into(),
            })?
            .to_string();
        let parse_dim = |s: Option<&str>, what: &str| -> Result<usize, CheckpointError> {
            s.and_then(|v| v.parse().ok())
                .ok_or_else(|| CheckpointError::Malformed {
                    line: number + 1,
                    message: format!("bad {what}"),
                })
        };
        let rows = parse_dim(fields.next(), "row count")?;
        let cols = parse_dim(fields.next(), "column count")?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (row_number, row_line) = lines.next().ok_or(CheckpointError::Malformed {
                line: number + 1,
                message: "truncated matrix".into(),
            })?;
            let row_line = row_line?;
            for field in row_line.split_whitespace() {
                let v: f64 = field.parse().map_err(|_| CheckpointError::Malformed {
                    line: row_number + 1,
                    message: format!("bad value {field:?}"),
                })?;
                data.push(v);
            }
        }
        let tensor =
            Tensor2D::from_vec(rows, cols, data).map_err(|e| CheckpointError::Malformed {
                line: number + 1,
                message: e.to_string(),
            })?;
        out.push((name, tensor));
    }
    Ok(out)
}
