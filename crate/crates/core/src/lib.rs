//! Hierarchical histology classification.
//!
//! Superpixels classified at low magnification (1.25x) supply tissue
//! context that is injected into, and used to correct, single-cell
//! classification at high magnification (20x).

pub mod cellfeat;
pub mod cellseg;
pub mod context;
pub mod error;
pub mod imgcore;
pub mod pipeline;
pub mod stain;
pub mod regionfeat;
pub mod schema;
pub mod superpix;
pub mod svmkit;

pub use error::{Error, Result};
