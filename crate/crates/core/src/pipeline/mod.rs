//! Corpus manifests, configuration, model persistence, end-to-end drivers
//! and the synthetic corpus generator.

pub mod bundle;
pub mod cell;
pub mod config;
pub mod manifest;
pub mod predict;
pub mod region;
pub mod report;
pub mod seeds;
pub mod synth;

pub use bundle::{ModelBundle, Task, TrainingMetadata, FORMAT_VERSION};
pub use cell::{train_cell_model, CONTEXT_MODEL_DIM, MORPHOLOGY_MODEL_DIM};
pub use config::{CellConfig, Config, RegionConfig};
pub use manifest::{CellAnnotation, CorpusManifest, ManifestEntry, Split, TileEntry};
pub use predict::{predict, CellPrediction, ImagePrediction, Mode};
pub use region::{region_ablation, train_region_model, AblationRow};
pub use report::{build_report, RunReport};
pub use seeds::substream;
pub use synth::{generate_synthetic, render_corpus, SyntheticSpec};
