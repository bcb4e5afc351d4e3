//! Variational autoencoder over node features with a bilinear edge head,
//! and the augmentation that turns its samples into pseudo-labeled nodes.

mod augment;
mod model;
mod train;

pub use augment::{
    argmax_class, attach_edges, augment, cosine, pseudo_label, AugmentConfig, AugmentStats,
    AugmentedGraph,
};
pub use model::{composite_loss, kl_divergence, VaeConfig, VaeLoss, VaeModel, VaePass};
pub use train::{train_vae, VaeHistory};
