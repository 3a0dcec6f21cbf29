//! Structural-entropy coding trees for document graphs, and a layer-wise
//! classifier that learns over them.
//!
//! The pipeline runs in stages, each persisted to disk by the CLI:
//!
//! 1. [`graphio`] turns dependency parses (or plain token streams) into one
//!    undirected graph per document.
//! 2. [`entropy`] converts each graph into a coding tree of fixed height by
//!    greedily minimizing structural entropy.
//! 3. [`features`] builds leaf features from word vectors and positions.
//! 4. [`learner`] trains a per-level MLP network over the trees.
//! 5. [`harness`] ties the stages together for the command-line tool.

pub mod entropy;
pub mod error;
pub mod features;
pub mod graphio;
pub mod harness;
pub mod learner;

pub use error::{Error, Result};
