//! Dataset ingestion and generation, checkpoints, and report files.

mod checkpoint;
mod csv_io;
mod generator;
mod graphml;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FoldSplitIds, SyntheticBlock, CHECKPOINT_VERSION};
pub use csv_io::{infer_schema, load_csv, load_dir, save_csv, CsvPaths};
pub use generator::{default_schema, generate_synthetic_dataset, GeneratorConfig, LabelSampling};
pub use graphml::load_graphml;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{FeatureSchema, LabelSet, RawTable, RoadGraph};

/// One day's count at one segment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRecord {
    pub segment_id: String,
    pub date: String,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum Provenance {
    Generator(GeneratorConfig),
    Files { paths: Vec<String> },
}

/// A graph with its schema, labels and the raw inputs it was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub graph: RoadGraph,
    pub schema: FeatureSchema,
    pub labels: LabelSet,
    /// Feature columns (schema order) exactly as read, one row per node.
    pub raw: RawTable,
    /// Daily count streams of the labeled segments.
    pub counts: Vec<CountRecord>,
    /// True ADB for every node when known (generator output).
    pub ground_truth: Option<Vec<f64>>,
    pub provenance: Provenance,
}

impl DatasetBundle {
    pub fn schema_fingerprint(&self) -> String {
        self.schema.fingerprint()
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| crate::error::Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })
}
