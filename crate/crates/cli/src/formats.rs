//! Network file formats: the "i j w" edge list and the matrix-json
//! document. Agent indices are 1-based on disk and 0-based in memory;
//! the conversion happens here and nowhere else.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use opdyn_core::matrix::Matrix;
use opdyn_core::network::{StochasticityClass, TrustMatrix};

use crate::config::{NetworkFormat, FORMAT_VERSION};
use crate::error::{CliError, Result};

/// Picks the format from an explicit choice or the file extension
/// (`.json` means matrix-json, anything else the edge list).
pub fn infer_format(path: &Path, explicit: Option<NetworkFormat>) -> NetworkFormat {
    explicit.unwrap_or_else(|| {
        if path.extension().is_some_and(|e| e == "json") {
            NetworkFormat::MatrixJson
        } else {
            NetworkFormat::EdgeList
        }
    })
}

/// Loads a trust matrix from a file in either format.
pub fn load_network(
    path: &Path,
    format: Option<NetworkFormat>,
    size: Option<usize>,
    row_tol: f64,
) -> Result<TrustMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let weights = match infer_format(path, format) {
        NetworkFormat::EdgeList => parse_edge_list(path, &text, size)?,
        NetworkFormat::MatrixJson => parse_matrix_json(path, &text)?,
    };
    Ok(TrustMatrix::validate(weights, row_tol)?)
}

/// Rejects networks a simulation cannot run on: every row must sum
/// to 1. Reports the first offending row with its external index.
pub fn require_stochastic(t: &TrustMatrix) -> Result<()> {
    if t.classification() == StochasticityClass::Stochastic {
        return Ok(());
    }
    let (row, sum) = t
        .weights()
        .row_sums()
        .into_iter()
        .enumerate()
        .max_by(|a, b| (a.1 - 1.0).abs().total_cmp(&(b.1 - 1.0).abs()))
        .expect("validated matrices are non-empty");
    Err(CliError::RowSumNotOne { row: row + 1, sum })
}

/// Parses "i j w" lines: agent `i` trusts agent `j` with weight `w`,
/// indices 1-based. Blank lines and `#` comments are skipped. The agent
/// count is the larger of `size` and the highest index seen. An
/// all-zero first row defaults to the stubborn row (1, 0, ..., 0).
fn parse_edge_list(path: &Path, text: &str, size: Option<usize>) -> Result<Matrix> {
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let mut max_index = 0usize;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let mut next = |name: &str| {
            fields
                .next()
                .ok_or_else(|| CliError::parse(path, lineno, format!("missing {name}")))
        };
        let i: usize = parse_field(path, lineno, "agent index", next("trusting agent index")?)?;
        let j: usize = parse_field(path, lineno, "agent index", next("trusted agent index")?)?;
        let w: f64 = parse_field(path, lineno, "weight", next("weight")?)?;
        if let Some(extra) = fields.next() {
            return Err(CliError::parse(
                path,
                lineno,
                format!("unexpected trailing field {extra:?}"),
            ));
        }
        if i == 0 || j == 0 {
            return Err(CliError::parse(path, lineno, "agent indices are 1-based"));
        }
        if edges.iter().any(|&(a, b, _)| a == i && b == j) {
            return Err(CliError::parse(
                path,
                lineno,
                format!("duplicate edge {i} {j}"),
            ));
        }
        max_index = max_index.max(i).max(j);
        edges.push((i, j, w));
    }

    if edges.is_empty() {
        return Err(CliError::parse(path, 1, "no edges in file"));
    }
    let k = size.unwrap_or(0).max(max_index);

    let mut m = Matrix::zero(k);
    for (i, j, w) in edges {
        m.set(i - 1, j - 1, w);
    }
    // The stubborn agent's self-trust row is implied when absent.
    if m.row(0).iter().all(|&v| v == 0.0) {
        m.set(0, 0, 1.0);
    }
    Ok(m)
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    lineno: usize,
    what: &str,
    token: &str,
) -> Result<T> {
    token
        .parse()
        .map_err(|_| CliError::parse(path, lineno, format!("invalid {what} {token:?}")))
}

#[derive(Serialize, Deserialize)]
struct MatrixDocument {
    #[serde(default)]
    format_version: Option<u32>,
    #[serde(rename = "K")]
    k: usize,
    rows: Vec<Vec<f64>>,
}

fn parse_matrix_json(path: &Path, text: &str) -> Result<Matrix> {
    let doc: MatrixDocument =
        serde_json::from_str(text).map_err(|e| CliError::json(path, e))?;
    if doc.rows.len() != doc.k {
        return Err(CliError::parse(
            path,
            1,
            format!("\"K\" is {} but there are {} rows", doc.k, doc.rows.len()),
        ));
    }
    Ok(Matrix::from_rows(&doc.rows)?)
}

/// Renders the positive entries as 1-based "i j w" lines. Weights use
/// the shortest decimal that round-trips, so save-then-load reproduces
/// the matrix bit for bit.
pub fn write_edge_list(t: &TrustMatrix) -> String {
    let m = t.weights();
    let mut out = format!("# format_version {FORMAT_VERSION}\n");
    for i in 0..m.size() {
        for j in 0..m.size() {
            let w = m.get(i, j);
            if w > 0.0 {
                writeln!(out, "{} {} {}", i + 1, j + 1, w).expect("string writes cannot fail");
            }
        }
    }
    out
}

/// Renders the matrix-json document.
pub fn write_matrix_json(t: &TrustMatrix) -> String {
    let doc = MatrixDocument {
        format_version: Some(FORMAT_VERSION),
        k: t.size(),
        rows: t.weights().to_rows(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("document serializes");
    text.push('\n');
    text
}

/// Writes a network to `path` in the given or inferred format.
pub fn save_network(path: &PathBuf, t: &TrustMatrix, format: Option<NetworkFormat>) -> Result<()> {
    let text = match infer_format(path, format) {
        NetworkFormat::EdgeList => write_edge_list(t),
        NetworkFormat::MatrixJson => write_matrix_json(t),
    };
    std::fs::write(path, text).map_err(|e| CliError::io(path.clone(), e))
}
