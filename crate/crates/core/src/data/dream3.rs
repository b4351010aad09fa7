//! DREAM3 in-silico challenge files.
//!
//! Expression trajectories are tab-separated with a `Time` column followed by
//! one column per gene. Replicates follow each other, separated by blank lines
//! or by the time column restarting. Only the final [`KEPT_TIME_POINTS`] rows
//! of every replicate are kept; earlier rows were recorded under perturbation.
//!
//! Gold standards list one `G<source>\tG<target>\t0|1` triple per line.

use std::fs;
use std::path::{Path, PathBuf};

use super::{MultivariateSeries, WeightedDigraph};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const KEPT_TIME_POINTS: usize = 11;

/// Parsed expression file: gene labels plus one N×11 series per replicate.
#[derive(Clone, Debug, PartialEq)]
pub struct Dream3Expression {
    pub genes: Vec<String>,
    pub replicates: Vec<MultivariateSeries>,
}

pub fn parse_dream3_expression(path: impl AsRef<Path>) -> Result<Vec<MultivariateSeries>> {
    Ok(read_expression(path)?.replicates)
}

pub fn read_expression(path: impl AsRef<Path>) -> Result<Dream3Expression> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_expression_str(&text, path)
}

fn unquote(cell: &str) -> &str {
    cell.trim().trim_matches('"')
}

pub fn parse_expression_str(text: &str, path: &Path) -> Result<Dream3Expression> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (header_line, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| err(1, "missing header row".into()))?;
    let cells: Vec<&str> = header.split('\t').map(unquote).collect();
    if !cells[0].eq_ignore_ascii_case("time") {
        return Err(err(
            header_line,
            format!("header must start with a Time column, found {:?}", cells[0]),
        ));
    }
    let genes: Vec<String> = cells[1..].iter().map(|s| s.to_string()).collect();
    if genes.is_empty() {
        return Err(err(header_line, "header lists no genes".into()));
    }

    // (first line number, rows of gene values)
    let mut blocks: Vec<(usize, Vec<Vec<f64>>)> = Vec::new();
    let mut current: Option<(usize, Vec<Vec<f64>>)> = None;
    let mut last_time = f64::NEG_INFINITY;
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            blocks.extend(current.take());
            continue;
        }
        let cells: Vec<&str> = line.split('\t').map(unquote).collect();
        if cells.len() != genes.len() + 1 {
            return Err(err(
                lineno,
                format!("expected {} columns, found {}", genes.len() + 1, cells.len()),
            ));
        }
        let mut values = Vec::with_capacity(cells.len());
        for cell in &cells {
            let v: f64 = cell
                .parse()
                .map_err(|_| err(lineno, format!("non-numeric cell {cell:?}")))?;
            if !v.is_finite() {
                return Err(err(lineno, format!("non-finite cell {cell:?}")));
            }
            values.push(v);
        }
        let time = values[0];
        if current.is_some() && time <= last_time {
            blocks.extend(current.take());
        }
        last_time = time;
        current
            .get_or_insert_with(|| (lineno, Vec::new()))
            .1
            .push(values[1..].to_vec());
    }
    blocks.extend(current.take());

    if blocks.is_empty() {
        return Err(err(header_line, "no expression rows".into()));
    }
    let mut replicates = Vec::with_capacity(blocks.len());
    for (start, rows) in blocks {
        if rows.len() < KEPT_TIME_POINTS {
            return Err(err(
                start,
                format!(
                    "replicate has {} time points, at least {KEPT_TIME_POINTS} required",
                    rows.len()
                ),
            ));
        }
        let tail = &rows[rows.len() - KEPT_TIME_POINTS..];
        let n = genes.len();
        let values = Tensor::from_fn(n, KEPT_TIME_POINTS, |gene, t| tail[t][gene]);
        replicates.push(MultivariateSeries::new(values)?);
    }
    Ok(Dream3Expression { genes, replicates })
}

/// Binary gold-standard network with `A[target][source] = 1` for every
/// listed positive edge.
pub fn parse_dream3_gold(path: impl AsRef<Path>, n: usize) -> Result<WeightedDigraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_gold_str(&text, n, path)
}

pub fn parse_gold_str(text: &str, n: usize, path: &Path) -> Result<WeightedDigraph> {
    let err = |line: usize, msg: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        msg,
    };
    if n == 0 {
        return Err(Error::Validation("gold network needs n >= 1".into()));
    }
    let mut adjacency = Tensor::zeros(n, n);
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split_whitespace().map(unquote).collect();
        if cells.len() != 3 {
            return Err(err(
                lineno,
                format!("expected 3 fields, found {}", cells.len()),
            ));
        }
        let source = gene_index(cells[0], n).ok_or_else(|| {
            err(lineno, format!("unknown gene label {:?}", cells[0]))
        })?;
        let target = gene_index(cells[1], n).ok_or_else(|| {
            err(lineno, format!("unknown gene label {:?}", cells[1]))
        })?;
        match cells[2] {
            "1" => adjacency.set(target, source, 1.0),
            "0" => {}
            other => return Err(err(lineno, format!("edge flag must be 0 or 1, found {other:?}"))),
        }
    }
    WeightedDigraph::new(adjacency)
}

/// `G<k>` with `1 <= k <= n` maps to index `k - 1`.
fn gene_index(label: &str, n: usize) -> Option<usize> {
    let k: usize = label.strip_prefix('G')?.parse().ok()?;
    (1..=n).contains(&k).then(|| k - 1)
}
