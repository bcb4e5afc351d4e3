//! Experiment configuration: JSON sections addressed by dotted keys.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gnn::HybridConfig;
use crate::vae::VaeConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            max_epochs: 500,
            patience: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Weight of the regression term; `1 − alpha` goes to classification.
    pub alpha: f64,
    /// Loss weight of each pseudo-labeled synthetic node.
    pub pseudo_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            pseudo_weight: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSection {
    pub enabled: bool,
    /// Synthetic nodes requested; `None` means one per training label.
    pub count: Option<usize>,
    pub tau: f64,
    pub top_k: usize,
}

impl Default for AugmentSection {
    fn default() -> Self {
        Self {
            enabled: true,
            count: None,
            tau: 0.7,
            top_k: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub folds: usize,
    pub test_fraction: f64,
    /// Share of each training partition held out for early stopping.
    pub val_fraction: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            test_fraction: 0.3,
            val_fraction: 0.15,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub model: HybridConfig,
    pub optim: OptimConfig,
    pub loss: LossConfig,
    pub vae: VaeConfig,
    pub augment: AugmentSection,
    pub protocol: ProtocolConfig,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.vae.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if !(self.optim.lr > 0.0 && self.optim.lr.is_finite()) {
            return bad(format!("optim.lr must be positive, got {}", self.optim.lr));
        }
        if self.optim.max_epochs == 0 {
            return bad("optim.max_epochs must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.loss.alpha) {
            return bad(format!("loss.alpha {} outside [0, 1]", self.loss.alpha));
        }
        if !(self.loss.pseudo_weight >= 0.0 && self.loss.pseudo_weight.is_finite()) {
            return bad("loss.pseudo_weight must be finite and non-negative".into());
        }
        if !(-1.0..=1.0).contains(&self.augment.tau) {
            return bad(format!("augment.tau {} outside [-1, 1]", self.augment.tau));
        }
        if self.augment.top_k == 0 {
            return bad("augment.top_k must be positive".into());
        }
        if self.protocol.folds < 2 {
            return bad(format!("protocol.folds must be at least 2, got {}", self.protocol.folds));
        }
        if !(self.protocol.test_fraction > 0.0 && self.protocol.test_fraction < 1.0) {
            return bad("protocol.test_fraction outside (0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.protocol.val_fraction) {
            return bad("protocol.val_fraction outside [0, 1)".into());
        }
        Ok(())
    }

    /// Whether a VAE is needed at all.
    pub fn uses_vae(&self) -> bool {
        self.augment.enabled && self.augment.count != Some(0)
    }

    /// Applies `section.key=value`; see [`set_dotted`].
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        set_dotted(self, assignment)
    }

    /// SHA-256 (hex) over the canonical config JSON and the schema fingerprint.
    pub fn fingerprint(&self, schema_fingerprint: &str) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("config serializes"));
        h.update(b"\n");
        h.update(schema_fingerprint.as_bytes());
        hex(&h.finalize())
    }
}

/// Applies `a.b.c=value` to any serde-round-trippable config. The value is
/// parsed as JSON, falling back to a plain string. Unknown keys are
/// rejected and leave `target` untouched.
pub fn set_dotted<T: Serialize + DeserializeOwned>(target: &mut T, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    let value: Value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut tree = serde_json::to_value(&*target)?;
    let mut slot = &mut tree;
    for part in key.split('.') {
        slot = slot
            .as_object_mut()
            .and_then(|o| o.get_mut(part))
            .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
    }
    *slot = value;
    *target = serde_json::from_value(tree).map_err(|e| Error::Config(format!("{key}: {e}")))?;
    Ok(())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
