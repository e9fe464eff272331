//! Hierarchical curriculum learning for multi-label text classification over
//! a label tree: label-tree construction, Poincaré label embeddings, a
//! convolutional attention classifier trained level by level, and metrics.

pub mod checkpoint;
pub mod curriculum;
pub mod data_io;
pub mod error;
pub mod hyperbolic;
pub mod io_util;
pub mod label_tree;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod rng;

pub use error::{Error, Result};
