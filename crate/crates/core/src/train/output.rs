//! Run directories: resolved config, report, metrics table, checkpoints.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::metrics::Metrics;
use super::pipeline::{RunOutcome, RunReport};
use crate::error::{Error, Result};
use crate::io::{save_checkpoint, write_json};

pub const CONFIG_FILE: &str = "config.json";
pub const REPORT_FILE: &str = "report.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.json";
pub const SYNTHETIC_FILE: &str = "synthetic.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

pub fn checkpoint_path(dir: &Path, fold: usize) -> PathBuf {
    dir.join(CHECKPOINT_DIR).join(format!("fold_{fold}.ckpt"))
}

/// Per-fold test rows, then `mean` and `std`.
pub fn metrics_csv(report: &RunReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["arm", "fold"];
    header.extend(Metrics::CSV_HEADER);
    w.write_record(&header)?;
    let mut row = |label: String, m: &Metrics| -> Result<()> {
        let mut rec = vec![report.arm.clone(), label];
        rec.extend(m.csv_fields());
        w.write_record(&rec)?;
        Ok(())
    };
    for f in &report.folds {
        row(f.fold.to_string(), &f.test)?;
    }
    row("mean".into(), &report.mean)?;
    row("std".into(), &report.std)?;
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Serialize)]
struct SyntheticRecord<'a> {
    fold: usize,
    seed: u64,
    tau: f64,
    top_k: usize,
    requested: usize,
    surviving: usize,
    ids: &'a [String],
    edges: &'a [(usize, String)],
    pseudo_reg: &'a [f64],
    pseudo_clf: &'a [u8],
}

/// Writes every artifact of `outcome` into `dir` (created if needed).
pub fn write_run(dir: &Path, outcome: &RunOutcome) -> Result<()> {
    std::fs::create_dir_all(dir.join(CHECKPOINT_DIR))?;
    write_json(&dir.join(CONFIG_FILE), &outcome.report.config)?;
    write_json(&dir.join(REPORT_FILE), &outcome.report)?;
    write_json(&dir.join(TIMING_FILE), &outcome.timing)?;
    std::fs::write(dir.join(METRICS_FILE), metrics_csv(&outcome.report)?)?;
    let mut synthetic = Vec::new();
    for (fold, ckpt) in outcome.checkpoints.iter().enumerate() {
        save_checkpoint(&checkpoint_path(dir, fold), ckpt)?;
        if let Some(s) = &ckpt.synthetic {
            synthetic.push(SyntheticRecord {
                fold,
                seed: s.seed,
                tau: s.tau,
                top_k: s.top_k,
                requested: s.requested,
                surviving: s.surviving,
                ids: &s.ids,
                edges: &s.edges,
                pseudo_reg: &s.pseudo_reg,
                pseudo_clf: &s.pseudo_clf,
            });
        }
    }
    write_json(&dir.join(SYNTHETIC_FILE), &synthetic)?;
    Ok(())
}
