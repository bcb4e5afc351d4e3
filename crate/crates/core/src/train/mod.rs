//! Cross-validation protocol, two-stage training, metrics and ablations.

mod arms;
mod config;
mod inference;
mod metrics;
mod output;
mod pipeline;
mod split;
mod trainer;

pub use arms::{ablation_csv, run_arms, Arm};
pub use config::{set_dotted, AugmentSection, LossConfig, OptimConfig, ProtocolConfig, TrainConfig};
pub use inference::{evaluate_checkpoint, predict_checkpoint, Evaluation, Prediction};
pub use metrics::{compute_metrics, Metrics};
pub use output::{
    checkpoint_path, metrics_csv, write_run, CHECKPOINT_DIR, CONFIG_FILE, METRICS_FILE, REPORT_FILE,
    SYNTHETIC_FILE, TIMING_FILE,
};
pub use pipeline::{
    audit_fold, oracle_metrics, run_pipeline, run_pipeline_with, score_nodes, train_shared_vae, AuditCheck,
    AuditInput, AuditReport, AugmentSummary, ClassThresholds, FoldReport, RunOutcome, RunReport, SharedVae,
    StageSummary, Timing, VaeSummary,
};
pub use split::{split_folds, FoldSplit, MIN_LABELS};
pub use trainer::{evaluate_loss, fine_tune_gnn, train_gnn, History, Supervision};
