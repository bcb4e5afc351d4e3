//! Hybrid graph neural networks with VAE-based graph augmentation for
//! estimating traffic volumes on sparsely labeled road networks.

pub mod autodiff;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod io;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod vae;
#[doc(hidden)]
pub mod testing;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{DenseMatrix, SparseMatrix};
