//! File formats accepted and written by the commands.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use tsgg_core::autodiff::Tensor;
use tsgg_core::data::{dream3, load_dataset, save_graph_set, GraphSet, MultivariateSeries, WeightedDigraph};
use tsgg_core::Result;

/// How a time-series input file is laid out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesFormat {
    /// Dataset JSON; every pair's series.
    Json,
    /// DREAM3 time-series TSV; every replicate, last 11 points.
    Dream3,
    /// One series, one row per node, comma or whitespace separated.
    Csv,
}

impl SeriesFormat {
    pub fn guess(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") => SeriesFormat::Dream3,
            Some("csv") => SeriesFormat::Csv,
            _ => SeriesFormat::Json,
        }
    }
}

fn parse_number_rows(text: &str, path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>().map_err(|e| tsgg_core::Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("{s:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_series(path: &Path, format: SeriesFormat) -> Result<Vec<MultivariateSeries>> {
    match format {
        SeriesFormat::Json => Ok(load_dataset(path)?.into_iter().map(|p| p.series).collect()),
        SeriesFormat::Dream3 => dream3::parse_dream3_expression(path),
        SeriesFormat::Csv => {
            let text = fs::read_to_string(path).map_err(|e| tsgg_core::Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            let rows = parse_number_rows(&text, path)?;
            Ok(vec![MultivariateSeries::new(Tensor::from_rows(&rows)?)?])
        }
    }
}

fn matrix_csv(m: &Tensor, out: &mut String) {
    for r in 0..m.rows() {
        let line: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
}

/// JSON graph set, or CSV blocks separated by blank lines when `path` ends
/// in `.csv`.
pub fn write_graphs(path: &Path, method: &str, graphs: &[WeightedDigraph]) -> Result<()> {
    if path.extension().is_some_and(|e| e == "csv") {
        let mut out = String::new();
        for (i, g) in graphs.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            matrix_csv(g.adjacency(), &mut out);
        }
        return fs::write(path, out).map_err(|e| tsgg_core::Error::Io {
            path: path.to_path_buf(),
            source: e,
        });
    }
    save_graph_set(&GraphSet::new(Some(method), graphs)?, path)
}

pub fn write_series_csv(path: &Path, series: &MultivariateSeries) -> Result<()> {
    let mut out = String::new();
    matrix_csv(series.values(), &mut out);
    fs::write(path, out).map_err(|e| tsgg_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
