//! Applying trained models to a manifest: per-cell labels in the three
//! modes.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bundle::{ModelBundle, Task};
use super::cell::{model_input, process_image, ImageCells, CONTEXT_MODEL_DIM, MORPHOLOGY_MODEL_DIM};
use super::config::Config;
use super::manifest::{CorpusManifest, ManifestEntry, Split};
use super::region::RegionPrediction;
use crate::cellfeat::CellClass;
use crate::context::{vote, VoteInput};
use crate::error::{Error, Result};
use crate::superpix::RegionClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Cell features only.
    Morphology,
    /// Cell features plus the one-hot region class.
    Context,
    /// Cell classifier ranking corrected by the region class.
    Voting,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Morphology, Mode::Context, Mode::Voting];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Morphology => "morphology",
            Mode::Context => "context",
            Mode::Voting => "voting",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown mode {s:?}")))
    }
}

/// One classified nucleus.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPrediction {
    pub tile: String,
    /// Centroid in image coordinates at 20x.
    pub x: f64,
    pub y: f64,
    pub truth: Option<CellClass>,
    pub predicted: CellClass,
    /// Probabilities in the order cancer, epidermis, lymphocyte, stromal.
    pub probs: [f64; 4],
    pub region: Option<RegionClass>,
}

#[derive(Debug, Clone)]
pub struct ImagePrediction {
    pub image: String,
    pub cells: Vec<CellPrediction>,
    pub unmatched_annotations: usize,
    /// Cells whose region could not be determined in context or voting mode.
    pub missing_context: usize,
    pub regions: Option<RegionPrediction>,
}

/// Checks that the models fit the mode. Returns whether the cell model
/// takes the region one-hot as input.
pub fn check_models(mode: Mode, cell_model: &ModelBundle, region_model: Option<&ModelBundle>) -> Result<bool> {
    if cell_model.task != Task::Cell {
        return Err(Error::IncompatibleModel("expected a cell model".into()));
    }
    if let Some(r) = region_model {
        if r.task != Task::Region {
            return Err(Error::IncompatibleModel("expected a region model".into()));
        }
    }
    let dim = cell_model.svm.dimension();
    let needs_region = || {
        region_model
            .map(|_| ())
            .ok_or_else(|| Error::InvalidArgument(format!("{mode} mode needs a region model")))
    };
    match mode {
        Mode::Morphology if dim == MORPHOLOGY_MODEL_DIM => Ok(false),
        Mode::Context if dim == CONTEXT_MODEL_DIM => needs_region().map(|_| true),
        Mode::Voting if dim == MORPHOLOGY_MODEL_DIM || dim == CONTEXT_MODEL_DIM => {
            needs_region().map(|_| dim == CONTEXT_MODEL_DIM)
        }
        _ => Err(Error::IncompatibleModel(format!("a {dim}-dimensional cell model cannot run in {mode} mode"))),
    }
}

/// Classifies the cells of processed images.
pub fn classify_cells(images: &[ImageCells], cell_model: &ModelBundle, mode: Mode, use_context: bool) -> Result<Vec<ImagePrediction>> {
    images
        .iter()
        .map(|img| {
            let regions = img.cell_regions();
            let mut cells = Vec::new();
            let mut missing_context = 0;
            for (t, tile_regions) in img.tiles.iter().zip(regions) {
                for i in 0..t.nuclei.len() {
                    let region = if mode == Mode::Morphology { None } else { tile_regions[i] };
                    if mode != Mode::Morphology && region.is_none() {
                        missing_context += 1;
                    }
                    let p = cell_model.svm.predict(&model_input(&t.features[i], region, use_context))?;
                    let predicted = match (mode, region) {
                        (Mode::Voting, Some(r)) => vote(&VoteInput::from_probabilities(&p, r)),
                        _ => CellClass::from_index(p.argmax()).expect("four cell classes"),
                    };
                    let (x, y) = t.global_xy(i);
                    cells.push(CellPrediction {
                        tile: t.tile_id.clone(),
                        x,
                        y,
                        truth: t.truth[i],
                        predicted,
                        probs: std::array::from_fn(|k| p.probs[k]),
                        region,
                    });
                }
            }
            Ok(ImagePrediction {
                image: img.image.clone(),
                cells,
                unmatched_annotations: img.tiles.iter().map(|t| t.unmatched_annotations).sum(),
                missing_context,
                regions: img.regions.clone(),
            })
        })
        .collect()
}

/// Runs the hierarchy on the images of `split` (all images when `None`).
/// Morphology mode never touches the region model.
pub fn predict(
    manifest: &CorpusManifest,
    split: Option<Split>,
    region_model: Option<&ModelBundle>,
    cell_model: &ModelBundle,
    mode: Mode,
    cfg: &Config,
) -> Result<Vec<ImagePrediction>> {
    let region_model = if mode == Mode::Morphology { None } else { region_model };
    let use_context = check_models(mode, cell_model, region_model)?;
    let entries: Vec<&ManifestEntry> = manifest
        .images
        .iter()
        .filter(|e| split.is_none_or(|s| e.split == s))
        .collect();
    let images = entries
        .par_iter()
        .map(|e| process_image(manifest, e, region_model, cfg))
        .collect::<Result<Vec<_>>>()?;
    classify_cells(&images, cell_model, mode, use_context)
}
