use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MultivariateSeries, PairedSample, WeightedDigraph};
use crate::error::{Error, Result};

pub const DATASET_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    version: u32,
    n: usize,
    t_len: usize,
    pairs: Vec<PairRecord>,
}

#[derive(Serialize, Deserialize)]
struct PairRecord {
    adjacency: Vec<Vec<f64>>,
    series: Vec<Vec<f64>>,
}

pub fn save_dataset(samples: &[PairedSample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let first = samples
        .first()
        .ok_or_else(|| Error::Validation("refusing to save an empty dataset".into()))?;
    let (n, t_len) = (first.n(), first.series.t_len());
    let mut pairs = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        if s.n() != n || s.series.t_len() != t_len {
            return Err(Error::Validation(format!(
                "pair {i} is {}x{}, dataset is {n}x{t_len}",
                s.n(),
                s.series.t_len()
            )));
        }
        pairs.push(PairRecord {
            adjacency: s.graph.adjacency().to_rows(),
            series: s.series.values().to_rows(),
        });
    }
    let doc = DatasetFile {
        version: DATASET_VERSION,
        n,
        t_len,
        pairs,
    };
    write_json(path, &doc)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<PairedSample>> {
    let path = path.as_ref();
    let doc: DatasetFile = read_json(path)?;
    if doc.version != DATASET_VERSION {
        return Err(Error::Version {
            path: path.into(),
            found: doc.version,
            expected: DATASET_VERSION,
        });
    }
    doc.pairs
        .into_iter()
        .enumerate()
        .map(|(i, rec)| {
            let graph = WeightedDigraph::from_rows(&rec.adjacency)?;
            let series = MultivariateSeries::from_rows(&rec.series)?;
            if graph.n() != doc.n || series.t_len() != doc.t_len {
                return Err(Error::Validation(format!(
                    "{}: pair {i} does not match declared shape {}x{}",
                    path.display(),
                    doc.n,
                    doc.t_len
                )));
            }
            PairedSample::new(series, graph)
        })
        .collect()
}

/// A list of same-sized graphs, e.g. predictions for a test split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSet {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    pub n: usize,
    pub graphs: Vec<Vec<Vec<f64>>>,
}

impl GraphSet {
    pub fn new(method: Option<&str>, graphs: &[WeightedDigraph]) -> Result<Self> {
        let n = graphs.first().map_or(0, WeightedDigraph::n);
        if graphs.iter().any(|g| g.n() != n) {
            return Err(Error::Validation("graph set mixes node counts".into()));
        }
        Ok(GraphSet {
            version: DATASET_VERSION,
            method: method.map(str::to_string),
            n,
            graphs: graphs.iter().map(|g| g.adjacency().to_rows()).collect(),
        })
    }

    pub fn to_graphs(&self) -> Result<Vec<WeightedDigraph>> {
        self.graphs
            .iter()
            .map(|rows| {
                let g = WeightedDigraph::from_rows(rows)?;
                if g.n() != self.n {
                    return Err(Error::Validation(format!(
                        "graph of size {} in a set declared as n = {}",
                        g.n(),
                        self.n
                    )));
                }
                Ok(g)
            })
            .collect()
    }
}

pub fn save_graph_set(set: &GraphSet, path: impl AsRef<Path>) -> Result<()> {
    write_json(path.as_ref(), set)
}

pub fn load_graph_set(path: impl AsRef<Path>) -> Result<GraphSet> {
    let path = path.as_ref();
    let set: GraphSet = read_json(path)?;
    if set.version != DATASET_VERSION {
        return Err(Error::Version {
            path: path.into(),
            found: set.version,
            expected: DATASET_VERSION,
        });
    }
    Ok(set)
}

/// Reads graphs from any of: a graph set, a dataset file (its adjacencies),
/// or a bare N×N array.
pub fn read_graph_document(path: impl AsRef<Path>) -> Result<Vec<WeightedDigraph>> {
    let path = path.as_ref();
    let value: serde_json::Value = read_json(path)?;
    if value.get("graphs").is_some() {
        return load_graph_set(path)?.to_graphs();
    }
    if value.get("pairs").is_some() {
        return Ok(load_dataset(path)?.into_iter().map(|p| p.graph).collect());
    }
    let rows: Vec<Vec<f64>> =
        serde_json::from_value(value).map_err(|e| Error::json(path, e))?;
    Ok(vec![WeightedDigraph::from_rows(&rows)?])
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_dataset, DatasetSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dataset_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.json");
        let ds = make_dataset(&DatasetSpec::new(6, 4, 9), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn truncated_file_is_structured_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.json");
        let ds = make_dataset(&DatasetSpec::new(4, 2, 5), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        save_dataset(&ds, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Json { .. })));
    }

    #[test]
    fn version_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.json");
        fs::write(&path, r#"{"version":7,"n":1,"t_len":1,"pairs":[]}"#).unwrap();
        assert!(matches!(
            load_dataset(&path),
            Err(Error::Version { found: 7, .. })
        ));
    }

    #[test]
    fn graph_document_variants() {
        let dir = tempfile::tempdir().unwrap();
        let bare = dir.path().join("g.json");
        fs::write(&bare, "[[0, 0.5], [-0.25, 0]]").unwrap();
        let gs = read_graph_document(&bare).unwrap();
        assert_eq!(gs[0].weight(0, 1), 0.5);

        let set = dir.path().join("set.json");
        save_graph_set(&GraphSet::new(Some("x"), &gs).unwrap(), &set).unwrap();
        assert_eq!(read_graph_document(&set).unwrap(), gs);
    }
}
