use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Categorical { levels: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
}

impl FeatureColumn {
    pub fn continuous(name: &str, units: Option<&str>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Continuous,
            units: units.map(Into::into),
        }
    }

    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical {
                levels: levels.iter().map(|s| s.to_string()).collect(),
            },
            units: None,
        }
    }

    fn width(&self) -> usize {
        match &self.kind {
            FeatureKind::Continuous => 1,
            FeatureKind::Categorical { levels } => levels.len(),
        }
    }
}

/// Ordered description of the raw per-segment attribute columns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<FeatureColumn>,
}

impl FeatureSchema {
    pub fn new(columns: Vec<FeatureColumn>) -> Result<Self> {
        let schema = Self { columns };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for col in &self.columns {
            if !names.insert(col.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column {:?}", col.name)));
            }
            if let FeatureKind::Categorical { levels } = &col.kind {
                if levels.is_empty() {
                    return Err(Error::Schema(format!("column {:?} has no levels", col.name)));
                }
                let unique: HashSet<_> = levels.iter().collect();
                if unique.len() != levels.len() {
                    return Err(Error::Schema(format!(
                        "column {:?} has duplicate levels",
                        col.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// One slot per categorical level plus one per continuous column.
    pub fn encoded_width(&self) -> usize {
        self.columns.iter().map(FeatureColumn::width).sum()
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    /// Hex SHA-256 of the canonical JSON form (first 16 bytes).
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("schema serializes");
        let digest = Sha256::digest(&json);
        digest[..16].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Raw attribute table: one row per node, values kept as text.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// One-hot encodes categorical columns and min-max scales continuous ones
/// over the whole table. Constant continuous columns map to 0.5.
pub fn encode_features(table: &RawTable, schema: &FeatureSchema) -> Result<DenseMatrix> {
    schema.validate()?;
    let n = table.rows.len();
    let width = schema.encoded_width();
    let mut out = DenseMatrix::zeros(n, width);
    for (r, row) in table.rows.iter().enumerate() {
        if row.len() != table.columns.len() {
            return Err(Error::Schema(format!(
                "row {r} has {} values for {} columns",
                row.len(),
                table.columns.len()
            )));
        }
    }
    let mut offset = 0;
    for col in &schema.columns {
        let src = table
            .column_index(&col.name)
            .ok_or_else(|| Error::Schema(format!("missing column {:?}", col.name)))?;
        match &col.kind {
            FeatureKind::Continuous => {
                let mut values = Vec::with_capacity(n);
                for (r, row) in table.rows.iter().enumerate() {
                    let v: f64 = row[src].trim().parse().map_err(|_| Error::NonFiniteFeature {
                        column: col.name.clone(),
                        row: r,
                    })?;
                    if !v.is_finite() {
                        return Err(Error::NonFiniteFeature {
                            column: col.name.clone(),
                            row: r,
                        });
                    }
                    values.push(v);
                }
                let min = values.iter().copied().fold(f64::INFINITY, f64::min);
                let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                for (r, &v) in values.iter().enumerate() {
                    let scaled = if max > min { (v - min) / (max - min) } else { 0.5 };
                    out.set(r, offset, scaled);
                }
            }
            FeatureKind::Categorical { levels } => {
                for (r, row) in table.rows.iter().enumerate() {
                    let value = row[src].trim();
                    let k = levels.iter().position(|l| l == value).ok_or_else(|| {
                        Error::UnknownLevel {
                            column: col.name.clone(),
                            value: value.to_string(),
                        }
                    })?;
                    out.set(r, offset + k, 1.0);
                }
            }
        }
        offset += col.width();
    }
    Ok(out)
}
