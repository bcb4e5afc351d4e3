//! Ablation arms sharing one VAE and one seed.

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::pipeline::{run_pipeline_with, train_shared_vae, RunOutcome, SharedVae};
use crate::error::{Error, Result};
use crate::gnn::{Branch, BranchMask};
use crate::io::DatasetBundle;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    Full,
    NoGat,
    NoSage,
    NoVae,
    GcnOnly,
    GatOnly,
    SageOnly,
}

impl Arm {
    /// The four rows of the ablation table.
    pub const ABLATION: [Arm; 4] = [Arm::Full, Arm::NoGat, Arm::NoSage, Arm::NoVae];
    /// Single-branch baselines, without augmentation.
    pub const SINGLE: [Arm; 3] = [Arm::GcnOnly, Arm::GatOnly, Arm::SageOnly];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Full => "full",
            Arm::NoGat => "no-gat",
            Arm::NoSage => "no-sage",
            Arm::NoVae => "no-vae",
            Arm::GcnOnly => "gcn-only",
            Arm::GatOnly => "gat-only",
            Arm::SageOnly => "sage-only",
        }
    }

    /// `base` with this arm's component removed; everything else, the seed
    /// included, is left alone.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut c = base.clone();
        match self {
            Arm::Full => {}
            Arm::NoGat => c.model.mask.gat = false,
            Arm::NoSage => c.model.mask.sage = false,
            Arm::NoVae => c.augment.enabled = false,
            Arm::GcnOnly | Arm::GatOnly | Arm::SageOnly => {
                let b = match self {
                    Arm::GcnOnly => Branch::Gcn,
                    Arm::GatOnly => Branch::Gat,
                    _ => Branch::Sage,
                };
                c.model.mask = BranchMask::only(b);
                c.augment.enabled = false;
            }
        }
        c
    }
}

impl std::str::FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Arm::ABLATION.as_slice(), Arm::SINGLE.as_slice()]
            .concat()
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown arm {s:?}")))
    }
}

/// Runs `arms` against `base`; the VAE is trained at most once.
pub fn run_arms(bundle: &DatasetBundle, base: &TrainConfig, arms: &[Arm], jobs: usize) -> Result<Vec<(Arm, RunOutcome)>> {
    let configs: Vec<(Arm, TrainConfig)> = arms.iter().map(|&a| (a, a.apply(base))).collect();
    for (_, c) in &configs {
        c.validate()?;
    }
    let vae: Option<SharedVae> = if configs.iter().any(|(_, c)| c.uses_vae()) {
        Some(train_shared_vae(bundle, base)?)
    } else {
        None
    };
    configs
        .into_iter()
        .map(|(arm, c)| {
            log::info!("arm {}", arm.name());
            Ok((arm, run_pipeline_with(bundle, &c, vae.as_ref(), jobs, arm.name())?))
        })
        .collect()
}

/// One row per arm: mean test metrics and the MAE change against `full`
/// when that arm is present.
pub fn ablation_csv(results: &[(Arm, RunOutcome)]) -> Result<String> {
    let full_mae = results.iter().find(|(a, _)| *a == Arm::Full).map(|(_, o)| o.report.mean.mae);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "arm",
        "mae",
        "rmse",
        "mape_pct",
        "r2",
        "accuracy",
        "precision",
        "recall",
        "f1",
        "mae_delta_vs_full",
        "config_fingerprint",
    ])?;
    for (arm, o) in results {
        let m = &o.report.mean;
        let delta = full_mae.map_or(String::new(), |f| (m.mae - f).to_string());
        w.write_record([
            arm.name().to_string(),
            m.mae.to_string(),
            m.rmse.to_string(),
            m.mape_pct.to_string(),
            m.r2.to_string(),
            m.accuracy.to_string(),
            m.precision.to_string(),
            m.recall.to_string(),
            m.f1.to_string(),
            delta,
            o.report.config_fingerprint.clone(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arms_change_one_thing() {
        let base = TrainConfig::default();
        assert_eq!(Arm::Full.apply(&base), base);
        let c = Arm::NoGat.apply(&base);
        assert!(!c.model.mask.gat && c.model.mask.gcn && c.model.mask.sage && c.augment.enabled);
        let c = Arm::NoVae.apply(&base);
        assert!(!c.uses_vae() && c.model == base.model);
        let c = Arm::SageOnly.apply(&base);
        assert_eq!(c.model.mask.count(), 1);
        assert!(c.model.mask.sage && !c.augment.enabled);
        assert_eq!(c.seed, base.seed);
    }

    #[test]
    fn arm_names_parse() {
        for a in Arm::ABLATION.iter().chain(&Arm::SINGLE) {
            assert_eq!(a.name().parse::<Arm>().unwrap(), *a);
        }
        assert!("no-gcn".parse::<Arm>().is_err());
    }
}
