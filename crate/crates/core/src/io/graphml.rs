//! GraphML import (for example OSMnx exports).
//!
//! When the feature keys are declared `for="edge"` the file is a street
//! graph whose edges are segments and the line-graph transform is applied.
//! Otherwise nodes are segments and edges their adjacency. In directed
//! files a `v → u` edge duplicating an earlier `u → v` edge is the same
//! two-way segment and is dropped.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use super::csv_io::{infer_schema, labels_from_counts};
use super::{CountRecord, DatasetBundle, Provenance};
use crate::error::{Error, Result};
use crate::graph::{encode_features, line_graph_edges, FeatureSchema, RawTable, RoadGraph};

struct Key {
    target: String,
    name: String,
    default: Option<String>,
}

fn data_of(node: roxmltree::Node, keys: &HashMap<String, Key>) -> HashMap<String, String> {
    let mut out = HashMap::new();
    for d in node.children().filter(|c| c.has_tag_name("data")) {
        if let Some(k) = d.attribute("key").and_then(|k| keys.get(k)) {
            out.insert(k.name.clone(), d.text().unwrap_or("").trim().to_string());
        }
    }
    out
}

/// Loads a GraphML graph; labels come from a `segment_id,date,count` CSV.
pub fn load_graphml(
    path: &Path,
    labels_csv: &Path,
    schema: Option<&FeatureSchema>,
) -> Result<DatasetBundle> {
    let text = std::fs::read_to_string(path)?;
    let doc = roxmltree::Document::parse(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.pos().row as usize,
        msg: e.to_string(),
    })?;
    let line_of = |n: roxmltree::Node| doc.text_pos_at(n.range().start).row as usize;
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let root = doc.root_element();
    let mut keys = HashMap::new();
    for k in root.children().filter(|c| c.has_tag_name("key")) {
        let id = k.attribute("id").ok_or_else(|| perr(line_of(k), "key without id".into()))?;
        let name = k.attribute("attr.name").unwrap_or(id).to_string();
        let default = k
            .children()
            .find(|c| c.has_tag_name("default"))
            .and_then(|d| d.text())
            .map(|t| t.trim().to_string());
        keys.insert(
            id.to_string(),
            Key {
                target: k.attribute("for").unwrap_or("all").to_string(),
                name,
                default,
            },
        );
    }
    let graph_el = root
        .children()
        .find(|c| c.has_tag_name("graph"))
        .ok_or_else(|| perr(1, "no <graph> element".into()))?;
    let directed = graph_el.attribute("edgedefault") == Some("directed");

    let reserved = ["segment_id", "osmid", "id", "key"];
    let feature_names = |target: &str| -> Vec<String> {
        let mut names: Vec<String> = keys
            .values()
            .filter(|k| k.target == target && !reserved.contains(&k.name.as_str()))
            .map(|k| k.name.clone())
            .collect();
        names.sort();
        names
    };
    let edge_centric = match schema {
        Some(s) => s
            .columns
            .iter()
            .all(|c| keys.values().any(|k| k.name == c.name && k.target == "edge")),
        None => !feature_names("edge").is_empty(),
    };
    let columns: Vec<String> = match schema {
        Some(s) => s.columns.iter().map(|c| c.name.clone()).collect(),
        None => feature_names(if edge_centric { "edge" } else { "node" }),
    };
    let default_for = |name: &str, target: &str| {
        keys.values()
            .find(|k| k.name == name && (k.target == target || k.target == "all"))
            .and_then(|k| k.default.clone())
    };
    let row_of = |data: &HashMap<String, String>, line: usize, target: &str| -> Result<Vec<String>> {
        columns
            .iter()
            .map(|c| {
                data.get(c)
                    .cloned()
                    .or_else(|| default_for(c, target))
                    .ok_or_else(|| perr(line, format!("missing attribute {c:?}")))
            })
            .collect()
    };

    let node_els: Vec<_> = graph_el.children().filter(|c| c.has_tag_name("node")).collect();
    let edge_els: Vec<_> = graph_el.children().filter(|c| c.has_tag_name("edge")).collect();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let edges: Vec<(usize, usize)> = if edge_centric {
        let mut seen = BTreeSet::new();
        let mut intersections: HashMap<&str, usize> = HashMap::new();
        let mut segs = Vec::new();
        for (k, e) in edge_els.iter().enumerate() {
            let line = line_of(*e);
            let s = e.attribute("source").ok_or_else(|| perr(line, "edge without source".into()))?;
            let t = e.attribute("target").ok_or_else(|| perr(line, "edge without target".into()))?;
            if directed && seen.contains(&(t, s)) {
                continue;
            }
            seen.insert((s, t));
            let n = intersections.len();
            let a = *intersections.entry(s).or_insert(n);
            let n = intersections.len();
            let b = *intersections.entry(t).or_insert(n);
            let data = data_of(*e, &keys);
            let id = data
                .get("segment_id")
                .cloned()
                .or_else(|| e.attribute("id").map(str::to_string))
                .unwrap_or_else(|| format!("e{k}"));
            ids.push(id);
            rows.push(row_of(&data, line, "edge")?);
            segs.push((a, b));
        }
        line_graph_edges(&segs)
    } else {
        let mut index = HashMap::new();
        for n in &node_els {
            let line = line_of(*n);
            let id = n.attribute("id").ok_or_else(|| perr(line, "node without id".into()))?;
            index.insert(id, ids.len());
            ids.push(id.to_string());
            rows.push(row_of(&data_of(*n, &keys), line, "node")?);
        }
        let mut out = Vec::new();
        for e in &edge_els {
            let line = line_of(*e);
            let find = |attr: &str| {
                e.attribute(attr)
                    .and_then(|v| index.get(v).copied())
                    .ok_or_else(|| perr(line, format!("edge {attr} is not a known node")))
            };
            let (a, b) = (find("source")?, find("target")?);
            if a != b {
                out.push((a, b));
            }
        }
        out
    };

    let raw = RawTable { columns, rows };
    let schema = match schema {
        Some(s) => s.clone(),
        None => infer_schema(&raw)?,
    };
    let features = encode_features(&raw, &schema)?;
    let graph = RoadGraph::new(ids, edges, features)?;
    let records: Vec<CountRecord> = {
        let mut reader = csv::Reader::from_path(labels_csv)?;
        let mut out = Vec::new();
        for rec in reader.deserialize::<CountRecord>() {
            out.push(rec.map_err(|e| Error::Parse {
                path: labels_csv.to_path_buf(),
                line: e.position().map_or(0, |p| p.line() as usize),
                msg: e.to_string(),
            })?);
        }
        out
    };
    let (labels, counts) = labels_from_counts(&graph, records)?;
    Ok(DatasetBundle {
        graph,
        schema,
        labels,
        raw,
        counts,
        ground_truth: None,
        provenance: Provenance::Files {
            paths: vec![path.display().to_string(), labels_csv.display().to_string()],
        },
    })
}
