//! Graph layers, hybrid fusion, task heads and the dual-task loss.

pub mod block;
pub mod hybrid;
pub mod layers;
pub mod loss;

pub use block::{plan, Block};
pub use hybrid::{Branch, BranchMask, FusionMode, HybridConfig, HybridModel, HybridOutput, Linear};
pub use layers::{gat_forward, gcn_forward, sage_forward, GatLayer, GcnLayer, SageLayer};
pub use loss::{joint_loss, joint_loss_value, LossTargets};
