//! Cell level: nucleus segmentation per tile, feature vectors, annotation
//! matching, global context from region predictions and training.

use rayon::prelude::*;

use super::bundle::{ModelBundle, Task, TrainingMetadata, FORMAT_VERSION};
use super::config::{CellConfig, Config};
use super::manifest::{load_cell_annotations, CellAnnotation, CorpusManifest, ManifestEntry, Split, TileEntry};
use super::region::{predict_regions, RegionPrediction};
use super::seeds::substream;
use crate::cellfeat::{
    local_context_features, morphology_features, region_one_hot, CellClass, CellFeatureVector, GLOBAL_LEN, LOCAL_LEN,
    MORPHOLOGY_LEN,
};
use crate::cellseg::{segment_nuclei, NeighbourIndex, Nucleus};
use crate::error::{Error, Result};
use crate::imgcore::{load_rgb, LabelMap, Magnification, REGION_DOWNSCALE};
use crate::schema::cell_schema_hash;
use crate::superpix::{project_region_label, RegionClass};
use crate::svmkit::svm_train;

/// Feature dimension without global context.
pub const MORPHOLOGY_MODEL_DIM: usize = MORPHOLOGY_LEN + LOCAL_LEN;
/// Feature dimension with the one-hot region of the cell.
pub const CONTEXT_MODEL_DIM: usize = MORPHOLOGY_MODEL_DIM + GLOBAL_LEN;

/// Segmented nuclei of one tile with their features and matched truth.
#[derive(Debug, Clone)]
pub struct TileCells {
    pub tile_id: String,
    pub origin: [u64; 2],
    pub nuclei: Vec<Nucleus>,
    pub features: Vec<CellFeatureVector>,
    /// Class of the annotation matched to each nucleus.
    pub truth: Vec<Option<CellClass>>,
    /// Annotations without a nucleus in range.
    pub unmatched_annotations: usize,
}

impl TileCells {
    /// Nucleus centroid in image (20x) coordinates.
    pub fn global_xy(&self, i: usize) -> (f64, f64) {
        let c = self.nuclei[i].centroid;
        (self.origin[0] as f64 + c.0, self.origin[1] as f64 + c.1)
    }
}

/// One-to-one matching of annotations to nucleus centroids within
/// `radius`: candidate pairs are taken by increasing distance, ties by
/// annotation then nucleus index.
pub fn match_annotations(nuclei: &[Nucleus], annotations: &[CellAnnotation], radius: f64) -> (Vec<Option<CellClass>>, usize) {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (a, ann) in annotations.iter().enumerate() {
        for (n, nuc) in nuclei.iter().enumerate() {
            let d = (nuc.centroid.0 - ann.x).hypot(nuc.centroid.1 - ann.y);
            if d <= radius {
                pairs.push((d, a, n));
            }
        }
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
    let mut truth = vec![None; nuclei.len()];
    let mut used = vec![false; annotations.len()];
    for (_, a, n) in pairs {
        if !used[a] && truth[n].is_none() {
            used[a] = true;
            truth[n] = Some(annotations[a].class);
        }
    }
    let unmatched = used.iter().filter(|&&u| !u).count();
    (truth, unmatched)
}

/// Segments a tile and computes morphology and local context per nucleus.
pub fn process_tile(manifest: &CorpusManifest, tile: &TileEntry, cfg: &CellConfig) -> Result<TileCells> {
    let img = load_rgb(&manifest.resolve(&tile.path), Magnification::x20())?;
    let seg = segment_nuclei(&img, &tile.id, &cfg.segment);
    let index = NeighbourIndex::for_nuclei(&seg.nuclei, cfg.local.neighbour_radius_um, cfg.local.pixel_size_um)?;
    let features = (0..seg.nuclei.len())
        .into_par_iter()
        .map(|i| {
            let m = morphology_features(&seg.nuclei[i], &img);
            let local = local_context_features(i, &seg.nuclei, &index, &img, &seg.foreground, &cfg.local);
            CellFeatureVector::new(m.values, local)
        })
        .collect::<Result<Vec<_>>>()?;
    let (truth, unmatched_annotations) = match &tile.cells {
        Some(p) => {
            let ann = load_cell_annotations(&manifest.resolve(p))?;
            match_annotations(&seg.nuclei, &ann, cfg.match_radius_px)
        }
        None => (vec![None; seg.nuclei.len()], 0),
    };
    Ok(TileCells {
        tile_id: tile.id.clone(),
        origin: tile.origin,
        nuclei: seg.nuclei,
        features,
        truth,
        unmatched_annotations,
    })
}

/// Region label map of an image, used to look up the class under a cell.
#[derive(Debug, Clone)]
pub struct RegionContext {
    pub labelmap: LabelMap,
    pub labels: Vec<RegionClass>,
}

impl RegionContext {
    pub fn from_prediction(p: &RegionPrediction) -> Self {
        RegionContext {
            labelmap: p.segmented.labelmap.clone(),
            labels: p.predicted.clone(),
        }
    }

    /// Region class at an image coordinate at 20x, if inside the map.
    pub fn region_at(&self, xy: (f64, f64)) -> Option<RegionClass> {
        project_region_label(xy, &self.labelmap, &self.labels, REGION_DOWNSCALE).ok()
    }
}

/// Cells of one image with the image's region context when requested.
#[derive(Debug, Clone)]
pub struct ImageCells {
    pub image: String,
    pub tiles: Vec<TileCells>,
    pub regions: Option<RegionPrediction>,
}

impl ImageCells {
    /// Region of every nucleus, tile by tile.
    pub fn cell_regions(&self) -> Vec<Vec<Option<RegionClass>>> {
        let ctx = self.regions.as_ref().map(RegionContext::from_prediction);
        self.tiles
            .iter()
            .map(|t| {
                (0..t.nuclei.len())
                    .map(|i| ctx.as_ref().and_then(|c| c.region_at(t.global_xy(i))))
                    .collect()
            })
            .collect()
    }
}

/// Processes every tile of an image, plus its region prediction when a
/// region model is given.
pub fn process_image(
    manifest: &CorpusManifest,
    entry: &ManifestEntry,
    region_model: Option<&ModelBundle>,
    cfg: &Config,
) -> Result<ImageCells> {
    let tiles = entry
        .tiles
        .par_iter()
        .map(|t| process_tile(manifest, t, &cfg.cell))
        .collect::<Result<Vec<_>>>()?;
    let regions = region_model
        .map(|m| predict_regions(manifest, entry, m, &cfg.region))
        .transpose()?;
    Ok(ImageCells {
        image: entry.id.clone(),
        tiles,
        regions,
    })
}

/// Processes all images of a split in manifest order.
pub fn process_split(
    manifest: &CorpusManifest,
    split: Split,
    region_model: Option<&ModelBundle>,
    cfg: &Config,
) -> Result<Vec<ImageCells>> {
    let entries: Vec<&ManifestEntry> = manifest.split(split).collect();
    entries
        .par_iter()
        .map(|e| process_image(manifest, e, region_model, cfg))
        .collect()
}

/// Model input of one cell. Context models get the one-hot region, or
/// zeros when the region is unknown.
pub fn model_input(features: &CellFeatureVector, region: Option<RegionClass>, use_context: bool) -> Vec<f64> {
    let mut v = features.to_vec();
    if use_context {
        v.extend_from_slice(&region.map(region_one_hot).unwrap_or([0.0; GLOBAL_LEN]));
    }
    v
}

#[derive(Debug, Clone)]
pub struct CellTraining {
    pub bundle: ModelBundle,
    pub samples: usize,
    /// Matched training cells skipped for lack of region context.
    pub missing_context: usize,
}

/// Trains the cell classifier on matched nuclei of the training split.
/// With `use_context` the region model supplies each cell's region class.
pub fn train_cell_model(
    manifest: &CorpusManifest,
    cfg: &Config,
    region_model: Option<&ModelBundle>,
    use_context: bool,
) -> Result<CellTraining> {
    if use_context && region_model.is_none() {
        return Err(Error::InvalidArgument("context training needs a region model".into()));
    }
    let images = process_split(manifest, Split::Train, region_model.filter(|_| use_context), cfg)?;
    train_from_cells(&images, cfg, use_context)
}

/// Training step on already processed images.
pub fn train_from_cells(images: &[ImageCells], cfg: &Config, use_context: bool) -> Result<CellTraining> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut missing_context = 0;
    for img in images {
        let regions = img.cell_regions();
        for (t, tile_regions) in img.tiles.iter().zip(regions) {
            for (i, truth) in t.truth.iter().enumerate() {
                let Some(class) = truth else { continue };
                let region = tile_regions[i];
                if use_context && region.is_none() {
                    missing_context += 1;
                    continue;
                }
                x.push(model_input(&t.features[i], region, use_context));
                y.push(class.index());
            }
        }
    }
    let mut classes: Vec<usize> = y.clone();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::InvalidTrainingSet(format!(
            "{} matched cells cover {} class(es)",
            y.len(),
            classes.len()
        )));
    }
    let svm = svm_train(&x, &y, 4, &cfg.cell.class_weights, &cfg.cell.svm, substream(cfg.seed, "cell/svm"))?;
    let mut counts = vec![0u64; 4];
    for &c in &y {
        counts[c] += 1;
    }
    let dim = svm.dimension();
    let bundle = ModelBundle {
        format_version: FORMAT_VERSION,
        task: Task::Cell,
        classes: CellClass::ALL.iter().map(|c| c.name().to_string()).collect(),
        feature_schema_hash: cell_schema_hash(dim),
        feature_families: None,
        glcm_levels: None,
        svm,
        stain_target_stats: None,
        training_metadata: TrainingMetadata {
            seed: cfg.seed,
            counts,
            cv_accuracy: None,
        },
    };
    Ok(CellTraining {
        bundle,
        samples: y.len(),
        missing_context,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nucleus(id: usize, x: u32, y: u32) -> Nucleus {
        Nucleus::from_pixels(id, vec![y * 100 + x], 100, 100, "t")
    }

    #[test]
    fn nearest_annotation_wins() {
        let nuclei = vec![nucleus(0, 10, 10), nucleus(1, 30, 10)];
        let ann = vec![
            CellAnnotation {
                x: 12.0,
                y: 10.0,
                class: CellClass::Cancer,
            },
            CellAnnotation {
                x: 11.0,
                y: 10.0,
                class: CellClass::Stromal,
            },
            CellAnnotation {
                x: 80.0,
                y: 80.0,
                class: CellClass::Lymphocyte,
            },
        ];
        let (truth, unmatched) = match_annotations(&nuclei, &ann, 10.0);
        assert_eq!(truth, vec![Some(CellClass::Stromal), None]);
        assert_eq!(unmatched, 2);
    }

    #[test]
    fn match_radius_is_inclusive() {
        let nuclei = vec![nucleus(0, 0, 0)];
        let ann = vec![CellAnnotation {
            x: 6.0,
            y: 8.0,
            class: CellClass::Epidermis,
        }];
        assert_eq!(match_annotations(&nuclei, &ann, 10.0).0, vec![Some(CellClass::Epidermis)]);
        assert_eq!(match_annotations(&nuclei, &ann, 9.99).1, 1);
    }

    #[test]
    fn context_input_dimensions() {
        let f = CellFeatureVector::new(vec![0.0; MORPHOLOGY_LEN], [1.0, 2.0, 3.0]).unwrap();
        assert_eq!(model_input(&f, None, false).len(), MORPHOLOGY_MODEL_DIM);
        let v = model_input(&f, Some(RegionClass::Epidermis), true);
        assert_eq!(v.len(), CONTEXT_MODEL_DIM);
        assert_eq!(&v[94..], &[0.0, 0.0, 1.0, 0.0]);
    }
}
