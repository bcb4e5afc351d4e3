//! Versioned binary model container.
//!
//! Layout: 8-byte magic, `u32` LE version, `u32` LE header length, a JSON
//! header, every matrix as row-major `f64` LE in header order, and a
//! SHA-256 of all preceding bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gnn::{HybridConfig, HybridModel};
use crate::graph::{RoadGraph, TargetScaler};
use crate::optim::Parameterized;
use crate::rng::SeedTree;
use crate::tensor::DenseMatrix;

const MAGIC: &[u8; 8] = b"BVGNNCK\0";
pub const CHECKPOINT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

/// Segment identifiers of one fold's partitions.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplitIds {
    pub fold: usize,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// Synthetic nodes a model was trained with, enough to rebuild 𝒢′.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBlock {
    pub ids: Vec<String>,
    #[serde(skip, default = "empty_matrix")]
    pub features: DenseMatrix,
    /// `(position within ids, original segment id)`.
    pub edges: Vec<(usize, String)>,
    pub pseudo_reg: Vec<f64>,
    pub pseudo_clf: Vec<u8>,
    pub seed: u64,
    pub tau: f64,
    pub top_k: usize,
    pub requested: usize,
    pub surviving: usize,
}

fn empty_matrix() -> DenseMatrix {
    DenseMatrix::zeros(0, 0)
}

impl Default for SyntheticBlock {
    fn default() -> Self {
        Self {
            ids: Vec::new(),
            features: DenseMatrix::zeros(0, 0),
            edges: Vec::new(),
            pseudo_reg: Vec::new(),
            pseudo_clf: Vec::new(),
            seed: 0,
            tau: 0.0,
            top_k: 0,
            requested: 0,
            surviving: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: HybridModel,
    pub scaler: TargetScaler,
    pub schema_fingerprint: String,
    /// Seed that keys neighbor sampling at inference time.
    pub inference_seed: u64,
    pub split: Option<FoldSplitIds>,
    pub synthetic: Option<SyntheticBlock>,
}

impl Checkpoint {
    /// The graph the model was trained and evaluated on: `base` plus any
    /// synthetic nodes.
    pub fn training_graph(&self, base: &RoadGraph) -> Result<RoadGraph> {
        let Some(s) = &self.synthetic else {
            return Ok(base.clone());
        };
        if s.ids.is_empty() {
            return Ok(base.clone());
        }
        let n = base.n_nodes();
        let edges = s
            .edges
            .iter()
            .map(|(j, id)| {
                base.index_of(id)
                    .map(|i| (n + j, i))
                    .ok_or_else(|| Error::Checkpoint(format!("synthetic edge to unknown segment {id:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        base.with_appended_nodes(s.ids.clone(), &s.features, &edges)
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model_config: HybridConfig,
    d_in: usize,
    schema_fingerprint: String,
    sage_concat_order: String,
    scaler: TargetScaler,
    inference_seed: u64,
    split: Option<FoldSplitIds>,
    synthetic: Option<SyntheticBlock>,
    matrices: Vec<MatrixEntry>,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let model = &ckpt.model;
    let mut mats: Vec<(String, &DenseMatrix)> = model.param_names().into_iter().zip(model.params()).collect();
    if let Some(s) = &ckpt.synthetic {
        mats.push(("synthetic.features".into(), &s.features));
    }
    let header = Header {
        model_config: model.config.clone(),
        d_in: model.d_in,
        schema_fingerprint: ckpt.schema_fingerprint.clone(),
        sage_concat_order: HybridModel::sage_concat_order().into(),
        scaler: ckpt.scaler,
        inference_seed: ckpt.inference_seed,
        split: ckpt.split.clone(),
        synthetic: ckpt.synthetic.clone(),
        matrices: mats
            .iter()
            .map(|(name, m)| MatrixEntry {
                name: name.clone(),
                rows: m.rows(),
                cols: m.cols(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(16 + json.len() + 8 * model.param_count() + DIGEST_LEN);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, m) in &mats {
        for v in m.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    std::fs::write(path, buf)?;
    Ok(())
}

/// Reads a checkpoint; with `expected_fingerprint` the schema must match.
pub fn load_checkpoint(path: &Path, expected_fingerprint: Option<&str>) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        if bytes.len() < MAGIC.len() && MAGIC.starts_with(&bytes) {
            return Err(Error::Checksum);
        }
        return Err(Error::Checkpoint("not a model checkpoint (bad magic)".into()));
    }
    if bytes.len() < MAGIC.len() + 8 + DIGEST_LEN {
        return Err(Error::Checksum);
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checksum);
    }
    let word = |at: usize| u32::from_le_bytes(body[at..at + 4].try_into().expect("4 bytes"));
    let version = word(8);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let header_len = word(12) as usize;
    let start = 16;
    let header_bytes = body
        .get(start..start + header_len)
        .ok_or_else(|| Error::Checkpoint("header overruns file".into()))?;
    let header: Header = serde_json::from_slice(header_bytes)?;
    if let Some(expected) = expected_fingerprint {
        if header.schema_fingerprint != expected {
            return Err(Error::FingerprintMismatch {
                expected: header.schema_fingerprint,
                found: expected.to_string(),
            });
        }
    }
    if header.sage_concat_order != HybridModel::sage_concat_order() {
        return Err(Error::Checkpoint(format!(
            "unsupported SAGE concatenation order {:?}",
            header.sage_concat_order
        )));
    }

    let mut offset = start + header_len;
    let mut matrices = Vec::with_capacity(header.matrices.len());
    for entry in &header.matrices {
        let len = entry.rows * entry.cols;
        let raw = body
            .get(offset..offset + 8 * len)
            .ok_or_else(|| Error::Checkpoint(format!("matrix {} overruns file", entry.name)))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        matrices.push((entry.name.clone(), DenseMatrix::from_vec(entry.rows, entry.cols, data)?));
        offset += 8 * len;
    }
    if offset != body.len() {
        return Err(Error::Checkpoint("trailing bytes after matrices".into()));
    }

    let mut model = HybridModel::new(header.model_config, header.d_in, &SeedTree::new(0))?;
    let names = model.param_names();
    let mut synthetic = header.synthetic;
    let mut iter = matrices.into_iter();
    for (slot, name) in model.params_mut().into_iter().zip(&names) {
        let (found, m) = iter
            .next()
            .ok_or_else(|| Error::Checkpoint(format!("missing matrix {name}")))?;
        if &found != name || m.shape() != slot.shape() {
            return Err(Error::Checkpoint(format!(
                "matrix {found} {:?} does not fit slot {name} {:?}",
                m.shape(),
                slot.shape()
            )));
        }
        *slot = m;
    }
    if let Some(s) = synthetic.as_mut() {
        let (name, m) = iter
            .next()
            .ok_or_else(|| Error::Checkpoint("missing synthetic feature block".into()))?;
        if name != "synthetic.features" || m.rows() != s.ids.len() {
            return Err(Error::Checkpoint("malformed synthetic feature block".into()));
        }
        s.features = m;
    }
    if iter.next().is_some() {
        return Err(Error::Checkpoint("unexpected extra matrices".into()));
    }
    Ok(Checkpoint {
        model,
        scaler: header.scaler,
        schema_fingerprint: header.schema_fingerprint,
        inference_seed: header.inference_seed,
        split: header.split,
        synthetic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let model = HybridModel::new(HybridConfig::default(), 6, &SeedTree::new(4)).unwrap();
        Checkpoint {
            model,
            scaler: TargetScaler { min: 2.0, max: 818.0 },
            schema_fingerprint: "abc".into(),
            inference_seed: 9,
            split: Some(FoldSplitIds {
                fold: 1,
                train: vec!["a".into()],
                validation: vec![],
                test: vec!["b".into()],
            }),
            synthetic: None,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let c = sample();
        save_checkpoint(&p, &c).unwrap();
        let back = load_checkpoint(&p, Some("abc")).unwrap();
        for (a, b) in c.model.params().iter().zip(back.model.params()) {
            let bits = |m: &DenseMatrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
        assert_eq!(back, c);
    }

    #[test]
    fn fingerprint_version_and_truncation_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&p, &sample()).unwrap();
        assert!(matches!(
            load_checkpoint(&p, Some("other")),
            Err(Error::FingerprintMismatch { .. })
        ));
        let bytes = std::fs::read(&p).unwrap();
        for cut in [bytes.len() - 1, bytes.len() / 2, 20, 3] {
            std::fs::write(&p, &bytes[..cut]).unwrap();
            assert!(matches!(load_checkpoint(&p, None), Err(Error::Checksum)), "cut {cut}");
        }
        let mut v2 = bytes[..bytes.len() - DIGEST_LEN].to_vec();
        v2[8..12].copy_from_slice(&2u32.to_le_bytes());
        let d = Sha256::digest(&v2);
        v2.extend_from_slice(&d);
        std::fs::write(&p, &v2).unwrap();
        assert!(matches!(load_checkpoint(&p, None), Err(Error::Version { found: 2, .. })));
    }
}
