//! Region level: downscaling, stain normalization, superpixels, features,
//! training and prediction.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::bundle::{ModelBundle, Task, TrainingMetadata, FORMAT_VERSION};
use super::config::{Config, RegionConfig};
use super::manifest::{load_region_annotations, CorpusManifest, ManifestEntry, Split};
use super::seeds::substream;
use crate::error::{Error, Result};
use crate::imgcore::{downscale_box, lab_planes, load_rgb, LabelMap, Magnification, RasterImage};
use crate::regionfeat::{region_feature_vector_with_levels, FamilySet, FeatureFamily, RegionPlanes};
use crate::schema::region_schema_hash;
use crate::stain::{compute_stats, reinhard_normalize, ChannelStats};
use crate::superpix::{assign_training_labels, slic_segment, superpixel_count, RegionClass, Superpixel};
use crate::svmkit::{kfold_cv, svm_train, ConfusionMatrix, CvResult};

/// Loads a manifest image and brings it to the region pixel size.
pub fn load_region_image(manifest: &CorpusManifest, entry: &ManifestEntry, cfg: &RegionConfig) -> Result<RasterImage> {
    let img = load_rgb(
        &manifest.resolve(&entry.image),
        Magnification::new(entry.magnification.clone(), entry.pixel_size_um),
    )?;
    to_region_level(img, cfg.pixel_size_um)
}

/// Area-average downscaling by `round(target / pixel size)` when that
/// factor exceeds one.
pub fn to_region_level(img: RasterImage, target_pixel_size_um: f64) -> Result<RasterImage> {
    let factor = (target_pixel_size_um / img.magnification.pixel_size_um).round() as i64;
    if factor > 1 {
        downscale_box(&img, factor)
    } else {
        Ok(img)
    }
}

/// Target lαβ statistics: the configured reference image, else the first
/// training image of the manifest.
pub fn stain_target(manifest: &CorpusManifest, cfg: &RegionConfig) -> Result<ChannelStats> {
    let img = match &cfg.stain_reference {
        Some(p) => {
            let full = manifest.resolve(p);
            to_region_level(load_rgb(&full, Magnification::x1_25())?, cfg.pixel_size_um)?
        }
        None => {
            let entry = manifest
                .split(Split::Train)
                .next()
                .ok_or(Error::EmptyTrainingSet)?;
            load_region_image(manifest, entry, cfg)?
        }
    };
    Ok(compute_stats(&img))
}

/// A normalized region-level image with its superpixels.
#[derive(Debug, Clone)]
pub struct SegmentedImage {
    pub id: String,
    pub image: RasterImage,
    pub labelmap: LabelMap,
    pub superpixels: Vec<Superpixel>,
}

/// Normalizes `img` towards `target` and runs SLIC with `ceil(S / U)` seeds.
pub fn segment_region_image(id: &str, img: &RasterImage, target: &ChannelStats, cfg: &RegionConfig) -> Result<SegmentedImage> {
    let image = reinhard_normalize(img, target);
    let n = superpixel_count(image.len() as i64, cfg.slic.superpixel_size as i64)?;
    let (labelmap, superpixels) = slic_segment(&lab_planes(&image), n as usize, &cfg.slic)?;
    Ok(SegmentedImage {
        id: id.to_string(),
        image,
        labelmap,
        superpixels,
    })
}

/// Feature vectors of the given superpixels, in input order.
pub fn superpixel_features(
    seg: &SegmentedImage,
    which: &[usize],
    families: FamilySet,
    glcm_levels: usize,
) -> Result<Vec<Vec<f64>>> {
    let planes = RegionPlanes::new(&seg.image);
    which
        .par_iter()
        .map(|&i| {
            region_feature_vector_with_levels(&seg.superpixels[i].member_pixels, &planes, families, glcm_levels)
                .map(|v| v.values)
        })
        .collect()
}

/// Labeled superpixels of one image with their full feature vectors.
#[derive(Debug, Clone)]
pub struct LabeledSuperpixels {
    pub image: String,
    pub superpixel: Vec<usize>,
    pub labels: Vec<RegionClass>,
    pub features: Vec<Vec<f64>>,
}

/// Segments an annotated image and extracts features of every superpixel
/// whose centroid lies strictly inside an annotated polygon.
pub fn labeled_superpixels(
    manifest: &CorpusManifest,
    entry: &ManifestEntry,
    target: &ChannelStats,
    cfg: &RegionConfig,
    families: FamilySet,
) -> Result<Option<(SegmentedImage, LabeledSuperpixels)>> {
    let Some(regions_path) = &entry.regions else {
        return Ok(None);
    };
    let regions = load_region_annotations(&manifest.resolve(regions_path), cfg.pixel_size_um)?;
    let img = load_region_image(manifest, entry, cfg)?;
    let mut seg = segment_region_image(&entry.id, &img, target, cfg)?;
    assign_training_labels(&mut seg.superpixels, &regions)?;
    let which: Vec<usize> = seg.superpixels.iter().filter(|s| s.label.is_some()).map(|s| s.id).collect();
    let features = superpixel_features(&seg, &which, families, cfg.glcm_levels)?;
    let labels = which.iter().map(|&i| seg.superpixels[i].label.expect("filtered")).collect();
    let out = LabeledSuperpixels {
        image: entry.id.clone(),
        superpixel: which,
        labels,
        features,
    };
    Ok(Some((seg, out)))
}

/// Pooled training rows of a split, images in manifest order.
pub fn collect_samples(
    manifest: &CorpusManifest,
    split: Split,
    target: &ChannelStats,
    cfg: &RegionConfig,
    families: FamilySet,
) -> Result<Vec<LabeledSuperpixels>> {
    let entries: Vec<&ManifestEntry> = manifest.split(split).collect();
    let per_image: Vec<Option<LabeledSuperpixels>> = entries
        .par_iter()
        .map(|e| Ok(labeled_superpixels(manifest, e, target, cfg, families)?.map(|(_, l)| l)))
        .collect::<Result<_>>()?;
    Ok(per_image.into_iter().flatten().collect())
}

/// Indices kept after capping each listed class at `per_class` samples.
/// Kept indices stay in their original order.
pub fn subsample_indices(labels: &[RegionClass], classes: &[RegionClass], per_class: usize, seed: u64) -> Vec<usize> {
    let mut keep = vec![true; labels.len()];
    for &c in classes {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.len() <= per_class {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(substream(seed, &format!("region/subsample/{c}")));
        let chosen = sample(&mut rng, members.len(), per_class);
        let mut selected = vec![false; members.len()];
        for i in chosen {
            selected[i] = true;
        }
        for (m, s) in members.into_iter().zip(selected) {
            keep[m] = s;
        }
    }
    (0..labels.len()).filter(|&i| keep[i]).collect()
}

/// Column positions of `subset` within a vector computed for `full`.
pub fn family_columns(full: FamilySet, subset: FamilySet) -> Vec<usize> {
    let mut cols = Vec::new();
    let mut offset = 0;
    for f in full.iter() {
        if subset.contains(f) {
            cols.extend(offset..offset + f.len());
        }
        offset += f.len();
    }
    cols
}

#[derive(Debug, Clone)]
pub struct RegionTraining {
    pub bundle: ModelBundle,
    pub cv: Option<CvResult>,
    pub samples: usize,
}

struct TrainingRows {
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
}

fn training_rows(samples: &[LabeledSuperpixels], cfg: &RegionConfig, seed: u64) -> Result<TrainingRows> {
    let labels: Vec<RegionClass> = samples.iter().flat_map(|s| s.labels.iter().copied()).collect();
    if labels.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let classes = cfg
        .subsample_classes
        .iter()
        .map(|c| c.parse())
        .collect::<Result<Vec<RegionClass>>>()?;
    let keep = subsample_indices(&labels, &classes, cfg.subsample_per_class, seed);
    let features: Vec<&Vec<f64>> = samples.iter().flat_map(|s| s.features.iter()).collect();
    Ok(TrainingRows {
        x: keep.iter().map(|&i| features[i].clone()).collect(),
        y: keep.iter().map(|&i| labels[i].index()).collect(),
    })
}

fn fit(
    rows: &TrainingRows,
    cfg: &RegionConfig,
    families: FamilySet,
    stats: &ChannelStats,
    seed: u64,
    with_cv: bool,
) -> Result<RegionTraining> {
    let cv = if with_cv {
        Some(kfold_cv(
            &rows.x,
            &rows.y,
            4,
            &cfg.class_weights,
            &cfg.svm,
            cfg.cv_folds,
            substream(seed, "region/cv"),
        )?)
    } else {
        None
    };
    let svm = svm_train(&rows.x, &rows.y, 4, &cfg.class_weights, &cfg.svm, substream(seed, "region/svm"))?;
    let mut counts = vec![0u64; 4];
    for &c in &rows.y {
        counts[c] += 1;
    }
    let bundle = ModelBundle {
        format_version: FORMAT_VERSION,
        task: Task::Region,
        classes: RegionClass::ALL.iter().map(|c| c.name().to_string()).collect(),
        feature_schema_hash: region_schema_hash(),
        feature_families: Some(families),
        glcm_levels: Some(cfg.glcm_levels),
        svm,
        stain_target_stats: Some(*stats),
        training_metadata: TrainingMetadata {
            seed,
            counts,
            cv_accuracy: cv.as_ref().map(|c| c.mean_accuracy),
        },
    };
    Ok(RegionTraining {
        bundle,
        cv,
        samples: rows.y.len(),
    })
}

/// Trains the region classifier on the manifest's training split.
pub fn train_region_model(manifest: &CorpusManifest, cfg: &Config, with_cv: bool) -> Result<RegionTraining> {
    let rc = &cfg.region;
    let stats = stain_target(manifest, rc)?;
    let samples = collect_samples(manifest, Split::Train, &stats, rc, rc.families)?;
    let rows = training_rows(&samples, rc, cfg.seed)?;
    fit(&rows, rc, rc.families, &stats, cfg.seed, with_cv)
}

/// One row of the feature-family ablation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub families: FamilySet,
    pub cv_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_accuracy: Option<f64>,
}

/// Single families followed by the combinations built on histograms.
pub fn ablation_sets() -> Vec<FamilySet> {
    use FeatureFamily::*;
    vec![
        FamilySet::of(&[Histogram]),
        FamilySet::of(&[Haralick]),
        FamilySet::of(&[Rilbp]),
        FamilySet::of(&[Sfta]),
        FamilySet::of(&[Histogram, Haralick]),
        FamilySet::of(&[Histogram, Rilbp]),
        FamilySet::of(&[Histogram, Sfta]),
        FamilySet::of(&[Histogram, Haralick, Rilbp]),
        FamilySet::of(&[Histogram, Haralick, Sfta]),
        FamilySet::ALL,
    ]
}

fn select(rows: &[Vec<f64>], cols: &[usize]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect()
}

/// Cross-validated (and, with a test split present, held-out) accuracy for
/// every ablation family set. Features are computed once for all families.
pub fn region_ablation(manifest: &CorpusManifest, cfg: &Config) -> Result<Vec<AblationRow>> {
    let rc = &cfg.region;
    let stats = stain_target(manifest, rc)?;
    let train = collect_samples(manifest, Split::Train, &stats, rc, FamilySet::ALL)?;
    let rows = training_rows(&train, rc, cfg.seed)?;
    let test = collect_samples(manifest, Split::Test, &stats, rc, FamilySet::ALL)?;
    let test_x: Vec<Vec<f64>> = test.iter().flat_map(|s| s.features.iter().cloned()).collect();
    let test_y: Vec<usize> = test.iter().flat_map(|s| s.labels.iter().map(|c| c.index())).collect();
    ablation_sets()
        .into_iter()
        .map(|families| {
            let cols = family_columns(FamilySet::ALL, families);
            let sub = TrainingRows {
                x: select(&rows.x, &cols),
                y: rows.y.clone(),
            };
            let t = fit(&sub, rc, families, &stats, cfg.seed, true)?;
            let test_accuracy = if test_y.is_empty() {
                None
            } else {
                let tx = select(&test_x, &cols);
                let mut correct = 0usize;
                for (x, &y) in tx.iter().zip(&test_y) {
                    if t.bundle.svm.predict_label(x)? == y {
                        correct += 1;
                    }
                }
                Some(correct as f64 / test_y.len() as f64)
            };
            Ok(AblationRow {
                families,
                cv_accuracy: t.cv.expect("cv requested").mean_accuracy,
                test_accuracy,
            })
        })
        .collect()
}

/// Predicted class of every superpixel of a segmented image.
pub fn classify_superpixels(model: &ModelBundle, seg: &SegmentedImage) -> Result<Vec<RegionClass>> {
    let families = model.feature_families.unwrap_or(FamilySet::ALL);
    let levels = model.glcm_levels.unwrap_or(crate::regionfeat::GLCM_LEVELS);
    let all: Vec<usize> = (0..seg.superpixels.len()).collect();
    let feats = superpixel_features(seg, &all, families, levels)?;
    feats
        .par_iter()
        .map(|f| {
            let label = model.svm.predict_label(f)?;
            RegionClass::from_index(label).ok_or_else(|| Error::IncompatibleModel(format!("region label {label}")))
        })
        .collect()
}

/// Region-level result of one image.
#[derive(Debug, Clone)]
pub struct RegionPrediction {
    pub segmented: SegmentedImage,
    pub predicted: Vec<RegionClass>,
    /// Annotation labels of superpixels, where available.
    pub truth: Vec<Option<RegionClass>>,
}

fn check_region_model(model: &ModelBundle) -> Result<()> {
    if model.task != Task::Region {
        return Err(Error::IncompatibleModel("expected a region model".into()));
    }
    Ok(())
}

/// Segments and classifies one manifest image with a region model. The
/// stain target is the one stored in the model.
pub fn predict_regions(
    manifest: &CorpusManifest,
    entry: &ManifestEntry,
    model: &ModelBundle,
    cfg: &RegionConfig,
) -> Result<RegionPrediction> {
    check_region_model(model)?;
    let stats = model
        .stain_target_stats
        .ok_or_else(|| Error::IncompatibleModel("region model has no stain target".into()))?;
    let img = load_region_image(manifest, entry, cfg)?;
    let mut seg = segment_region_image(&entry.id, &img, &stats, cfg)?;
    let truth = match &entry.regions {
        Some(p) => {
            let regions = load_region_annotations(&manifest.resolve(p), cfg.pixel_size_um)?;
            assign_training_labels(&mut seg.superpixels, &regions)?;
            seg.superpixels.iter().map(|s| s.label).collect()
        }
        None => vec![None; seg.superpixels.len()],
    };
    let predicted = classify_superpixels(model, &seg)?;
    Ok(RegionPrediction {
        segmented: seg,
        predicted,
        truth,
    })
}

/// Confusion matrix of annotated superpixels over several images.
pub fn region_confusion<'a>(preds: impl IntoIterator<Item = &'a RegionPrediction>) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::new(RegionClass::ALL.iter().map(|c| c.name().to_string()).collect());
    for p in preds {
        for (t, q) in p.truth.iter().zip(&p.predicted) {
            if let Some(t) = t {
                cm.add(t.index(), q.index());
            }
        }
    }
    cm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsample_caps_only_listed_classes() {
        let mut labels = vec![RegionClass::Tumour; 30];
        labels.extend(vec![RegionClass::Lumen; 20]);
        let keep = subsample_indices(&labels, &[RegionClass::Tumour], 10, 3);
        assert_eq!(keep.len(), 30);
        assert!(keep.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(keep.iter().filter(|&&i| i < 30).count(), 10);
        assert_eq!(keep, subsample_indices(&labels, &[RegionClass::Tumour], 10, 3));
    }

    #[test]
    fn column_selection() {
        let cols = family_columns(FamilySet::ALL, FamilySet::parse("hist+sfta").unwrap());
        assert_eq!(cols.len(), 14);
        assert_eq!(cols[7], 78);
        assert_eq!(family_columns(FamilySet::ALL, FamilySet::ALL), (0..85).collect::<Vec<_>>());
    }

    #[test]
    fn ablation_layout() {
        let sets = ablation_sets();
        assert_eq!(sets.len(), 10);
        assert_eq!(sets.iter().filter(|s| s.iter().count() == 1).count(), 4);
        assert_eq!(sets[9], FamilySet::ALL);
    }

    #[test]
    fn already_at_region_level_is_untouched() {
        let img = RasterImage::filled(10, 10, [1, 2, 3], Magnification::x1_25()).unwrap();
        assert_eq!(to_region_level(img.clone(), 8.064).unwrap(), img);
        let hi = RasterImage::filled(32, 32, [1, 2, 3], Magnification::x20()).unwrap();
        assert_eq!(to_region_level(hi, 8.064).unwrap().width(), 2);
    }
}
