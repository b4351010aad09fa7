//! Resolved run configuration, written next to every command's output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tsgg_core::training::{GanHyper, ZMode};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataParams {
    pub n: usize,
    pub pairs: usize,
    pub t_len: usize,
    pub p_edge: f64,
}

impl Default for DataParams {
    fn default() -> Self {
        DataParams {
            n: 10,
            pairs: 800,
            t_len: 20,
            p_edge: 0.4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricParams {
    pub xi: f64,
    pub grid_step: f64,
    pub metrics: Vec<String>,
    /// Compare `|prediction|` with the truth (for unsigned gold standards).
    pub absolute: bool,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams {
            xi: 1.0,
            grid_step: tsgg_core::metrics::DEFAULT_GRID_STEP,
            metrics: vec!["him".into(), "qjsd".into()],
            absolute: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub data: DataParams,
    pub hyper: GanHyper,
    /// Number of leading dataset pairs used for training.
    pub split: Option<usize>,
    pub metrics: MetricParams,
    pub ridge: f64,
    pub z_mode: ZMode,
    pub paths: BTreeMap<String, PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: String::new(),
            seed: 0,
            data: DataParams::default(),
            hyper: GanHyper::default(),
            split: None,
            metrics: MetricParams::default(),
            ridge: tsgg_core::baseline::DEFAULT_RIDGE,
            z_mode: ZMode::Zeros,
            paths: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: invalid run config: {e}", path.display())))
    }

    pub fn path(&self, key: &str) -> Result<&Path, CliError> {
        self.paths
            .get(key)
            .map(PathBuf::as_path)
            .ok_or_else(|| CliError::usage(format!("missing required path --{key}")))
    }

    /// Writes `<out>.run.json`.
    pub fn write_beside(&self, out: &Path) -> Result<PathBuf, CliError> {
        let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
        name.push(".run.json");
        let path = out.with_file_name(name);
        let text = serde_json::to_string_pretty(self).expect("run config serializes");
        fs::write(&path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}
