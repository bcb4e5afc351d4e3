//! CSV interchange: `nodes.csv`, `edges.csv`, `labels.csv`, `schema.json`,
//! plus `ground_truth.csv` and `provenance.json` when available.
//!
//! A nodes file with `u` and `v` columns is edge-centric: each row is a
//! street segment between two intersections and the line-graph transform
//! derives adjacency, so no edges file is needed.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use super::{read_json, write_json, CountRecord, DatasetBundle, Provenance};
use crate::error::{Error, Result};
use crate::graph::{
    compute_adb, encode_features, line_graph_edges, FeatureColumn, FeatureSchema,
    LabelSet, RawTable, RoadGraph,
};

pub const NODES_FILE: &str = "nodes.csv";
pub const EDGES_FILE: &str = "edges.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const SCHEMA_FILE: &str = "schema.json";
pub const TRUTH_FILE: &str = "ground_truth.csv";
pub const PROVENANCE_FILE: &str = "provenance.json";

#[derive(Clone, Debug, Default)]
pub struct CsvPaths {
    pub nodes: PathBuf,
    pub edges: Option<PathBuf>,
    pub labels: PathBuf,
    pub schema: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
}

impl CsvPaths {
    /// Standard file names inside `dir`; optional files only if present.
    pub fn in_dir(dir: &Path) -> Self {
        let opt = |name: &str| Some(dir.join(name)).filter(|p| p.exists());
        Self {
            nodes: dir.join(NODES_FILE),
            edges: opt(EDGES_FILE),
            labels: dir.join(LABELS_FILE),
            schema: opt(SCHEMA_FILE),
            ground_truth: opt(TRUTH_FILE),
        }
    }
}

struct Table {
    path: PathBuf,
    headers: Vec<String>,
    /// `(1-based line, fields)`.
    rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| match e.kind() {
                csv::ErrorKind::Io(_) => Error::Csv(e),
                _ => parse_err(1, e.to_string()),
            })?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                parse_err(line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            rows.push((line, rec.iter().map(str::to_string).collect()));
        }
        Ok(Self {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: self.path.clone(),
            line: 1,
            msg: format!("missing column {name:?}"),
        })
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }
}

/// Continuous when every value parses as a finite number; otherwise
/// categorical with levels in sorted order.
pub fn infer_schema(table: &RawTable) -> Result<FeatureSchema> {
    let columns = table
        .columns
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let numeric = table
                .rows
                .iter()
                .all(|r| r[c].trim().parse::<f64>().is_ok_and(f64::is_finite));
            if numeric {
                FeatureColumn::continuous(name, None)
            } else {
                let levels: BTreeSet<&str> = table.rows.iter().map(|r| r[c].trim()).collect();
                let levels: Vec<&str> = levels.into_iter().collect();
                FeatureColumn::categorical(name, &levels)
            }
        })
        .collect();
    FeatureSchema::new(columns)
}

/// Groups count rows by node and derives ADB labels (ascending node index).
pub(crate) fn labels_from_counts(
    graph: &RoadGraph,
    records: Vec<CountRecord>,
) -> Result<(LabelSet, Vec<CountRecord>)> {
    let mut by_node: BTreeMap<usize, Vec<CountRecord>> = BTreeMap::new();
    for r in records {
        let i = graph
            .index_of(&r.segment_id)
            .ok_or_else(|| Error::DanglingLabel(r.segment_id.clone()))?;
        by_node.entry(i).or_default().push(r);
    }
    let mut indices = Vec::with_capacity(by_node.len());
    let mut adb = Vec::with_capacity(by_node.len());
    let mut ordered = Vec::new();
    for (i, recs) in by_node {
        let counts: Vec<u64> = recs.iter().map(|r| r.count).collect();
        indices.push(i);
        adb.push(compute_adb(&counts)? as f64);
        ordered.extend(recs);
    }
    if indices.is_empty() {
        return Err(Error::EmptyLabels);
    }
    let labels = LabelSet::new(indices, adb, graph.n_nodes())?;
    Ok((labels, ordered))
}

fn read_counts(path: &Path) -> Result<Vec<CountRecord>> {
    let t = Table::read(path)?;
    let (id, date, count) = (t.column("segment_id")?, t.column("date")?, t.column("count")?);
    t.rows
        .iter()
        .map(|(line, r)| {
            let c = r[count]
                .trim()
                .parse::<u64>()
                .map_err(|e| t.err(*line, format!("count {:?}: {e}", r[count])))?;
            Ok(CountRecord {
                segment_id: r[id].trim().to_string(),
                date: r[date].trim().to_string(),
                count: c,
            })
        })
        .collect()
}

fn read_truth(path: &Path, graph: &RoadGraph) -> Result<Vec<f64>> {
    let t = Table::read(path)?;
    let (id, adb) = (t.column("segment_id")?, t.column("adb")?);
    let mut out = vec![f64::NAN; graph.n_nodes()];
    for (line, r) in &t.rows {
        let i = graph
            .index_of(r[id].trim())
            .ok_or_else(|| t.err(*line, format!("unknown segment {:?}", r[id])))?;
        out[i] = r[adb].trim().parse().map_err(|e| t.err(*line, format!("adb: {e}")))?;
    }
    if out.iter().any(|v| v.is_nan()) {
        return Err(t.err(0, "ground truth does not cover every segment"));
    }
    Ok(out)
}

pub fn load_csv(paths: &CsvPaths) -> Result<DatasetBundle> {
    let nodes = Table::read(&paths.nodes)?;
    let id_col = nodes.column("segment_id")?;
    let edge_centric = nodes.headers.iter().any(|h| h == "u") && nodes.headers.iter().any(|h| h == "v");
    let reserved = |h: &str| h == "segment_id" || (edge_centric && (h == "u" || h == "v"));
    let feature_cols: Vec<usize> = (0..nodes.headers.len()).filter(|&c| !reserved(&nodes.headers[c])).collect();

    let ids: Vec<String> = nodes.rows.iter().map(|(_, r)| r[id_col].trim().to_string()).collect();
    let mut raw = RawTable {
        columns: feature_cols.iter().map(|&c| nodes.headers[c].clone()).collect(),
        rows: nodes
            .rows
            .iter()
            .map(|(_, r)| feature_cols.iter().map(|&c| r[c].clone()).collect())
            .collect(),
    };
    let schema = match &paths.schema {
        Some(p) => read_json::<FeatureSchema>(p)?,
        None => infer_schema(&raw)?,
    };
    schema.validate()?;
    // Reorder raw columns to schema order; unknown columns are an error.
    for col in &raw.columns {
        if !schema.columns.iter().any(|c| &c.name == col) {
            return Err(nodes.err(1, format!("column {col:?} is not in the schema")));
        }
    }
    let order: Vec<usize> = schema
        .columns
        .iter()
        .map(|c| {
            raw.column_index(&c.name)
                .ok_or_else(|| nodes.err(1, format!("missing column {:?}", c.name)))
        })
        .collect::<Result<_>>()?;
    raw = RawTable {
        columns: schema.columns.iter().map(|c| c.name.clone()).collect(),
        rows: raw.rows.iter().map(|r| order.iter().map(|&k| r[k].clone()).collect()).collect(),
    };
    let features = encode_features(&raw, &schema)?;

    let edges: Vec<(usize, usize)> = if edge_centric {
        let (u, v) = (nodes.column("u")?, nodes.column("v")?);
        let mut intersections: HashMap<String, usize> = HashMap::new();
        let mut key = |s: &str| {
            let n = intersections.len();
            *intersections.entry(s.trim().to_string()).or_insert(n)
        };
        let segs: Vec<(usize, usize)> = nodes.rows.iter().map(|(_, r)| (key(&r[u]), key(&r[v]))).collect();
        line_graph_edges(&segs)
    } else {
        let path = paths
            .edges
            .as_ref()
            .ok_or_else(|| Error::MissingData("node-centric input needs an edges file".into()))?;
        let t = Table::read(path)?;
        let (a, b) = (t.column("segment_id_a")?, t.column("segment_id_b")?);
        let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut out = Vec::with_capacity(t.rows.len());
        for (line, r) in &t.rows {
            let find = |s: &str| {
                index
                    .get(s.trim())
                    .copied()
                    .ok_or_else(|| t.err(*line, format!("unknown segment {s:?}")))
            };
            let (i, j) = (find(&r[a])?, find(&r[b])?);
            if i == j {
                return Err(t.err(*line, "self-loop edge"));
            }
            out.push((i, j));
        }
        out
    };
    let graph = RoadGraph::new(ids, edges, features)?;
    let (labels, counts) = labels_from_counts(&graph, read_counts(&paths.labels)?)?;
    let ground_truth = match &paths.ground_truth {
        Some(p) => Some(read_truth(p, &graph)?),
        None => None,
    };
    let mut sources = vec![paths.nodes.display().to_string()];
    sources.extend(paths.edges.iter().map(|p| p.display().to_string()));
    sources.push(paths.labels.display().to_string());
    Ok(DatasetBundle {
        graph,
        schema,
        labels,
        raw,
        counts,
        ground_truth,
        provenance: Provenance::Files { paths: sources },
    })
}

/// Loads the standard file set from a directory; a `provenance.json` there
/// replaces the file-path provenance.
pub fn load_dir(dir: &Path) -> Result<DatasetBundle> {
    let mut bundle = load_csv(&CsvPaths::in_dir(dir))?;
    let prov = dir.join(PROVENANCE_FILE);
    if prov.exists() {
        bundle.provenance = read_json(&prov)?;
    }
    Ok(bundle)
}

/// Writes the node-centric file set into `dir` (created if needed).
pub fn save_csv(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let g = &bundle.graph;
    let mut w = csv::Writer::from_path(dir.join(NODES_FILE))?;
    let mut header = vec!["segment_id".to_string()];
    header.extend(bundle.raw.columns.iter().cloned());
    w.write_record(&header)?;
    for (i, row) in bundle.raw.rows.iter().enumerate() {
        let mut rec = vec![g.node_id(i).to_string()];
        rec.extend(row.iter().cloned());
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(EDGES_FILE))?;
    w.write_record(["segment_id_a", "segment_id_b"])?;
    for (a, b) in g.edges() {
        w.write_record([g.node_id(a), g.node_id(b)])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(LABELS_FILE))?;
    w.write_record(["segment_id", "date", "count"])?;
    for r in &bundle.counts {
        w.write_record([r.segment_id.as_str(), r.date.as_str(), &r.count.to_string()])?;
    }
    w.flush()?;

    if let Some(truth) = &bundle.ground_truth {
        let mut w = csv::Writer::from_path(dir.join(TRUTH_FILE))?;
        w.write_record(["segment_id", "adb"])?;
        for (i, v) in truth.iter().enumerate() {
            w.write_record([g.node_id(i), &v.to_string()])?;
        }
        w.flush()?;
    }
    write_json(&dir.join(SCHEMA_FILE), &bundle.schema)?;
    write_json(&dir.join(PROVENANCE_FILE), &bundle.provenance)?;
    Ok(())
}
