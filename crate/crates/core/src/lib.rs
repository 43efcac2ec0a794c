//! Self-supervised temporal graph learning by aligning a Hawkes-process
//! temporal intensity with a GNN-based structural intensity.
//!
//! The crate covers ingestion of timestamped edge lists, the intensity
//! models, the loss stack with a hand-written reverse pass, Adam, a
//! finite-difference gradient checker, training over chronological
//! batches, and link-prediction evaluation.

// Index loops mirror the matrix algebra; the forward and reverse passes take
// many tensors at once.
#![allow(clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod adam;
pub mod checkpoint;
pub mod engine;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod global;
pub mod gradcheck;
pub mod graph;
pub mod linalg;
pub mod objective;
pub mod params;
pub mod structural;
pub mod synthetic;
pub mod temporal;
pub mod train;

pub use error::{Error, Result};
