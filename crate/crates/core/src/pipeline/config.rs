use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cellfeat::LocalContextParams;
use crate::cellseg::SegmentParams;
use crate::error::{Error, Result};
use crate::regionfeat::{FamilySet, GLCM_LEVELS};
use crate::superpix::SlicParams;
use crate::svmkit::SvmParams;

use super::synth::SyntheticSpec;

/// Every tunable of the pipeline. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub region: RegionConfig,
    pub cell: CellConfig,
    pub synthetic: SyntheticSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionConfig {
    pub slic: SlicParams,
    /// Pixel size of the region level in µm (1.25x).
    pub pixel_size_um: f64,
    pub glcm_levels: usize,
    pub families: FamilySet,
    /// Majority classes are subsampled to at most this many superpixels each.
    pub subsample_per_class: usize,
    pub subsample_classes: Vec<String>,
    /// Penalty multipliers in the order tumour, stroma, epidermis, lumen.
    pub class_weights: [f64; 4],
    pub svm: SvmParams,
    pub cv_folds: usize,
    /// Stain reference image; defaults to the first training image.
    pub stain_reference: Option<PathBuf>,
}

impl Default for RegionConfig {
    fn default() -> Self {
        RegionConfig {
            slic: SlicParams::default(),
            pixel_size_um: crate::imgcore::PIXEL_SIZE_20X_UM * f64::from(crate::imgcore::REGION_DOWNSCALE),
            glcm_levels: GLCM_LEVELS,
            families: FamilySet::ALL,
            subsample_per_class: 5000,
            subsample_classes: vec!["tumour".into(), "stroma".into()],
            class_weights: [1.0, 1.0, 10.0, 10.0],
            svm: SvmParams::default(),
            cv_folds: 10,
            stain_reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellConfig {
    pub segment: SegmentParams,
    pub local: LocalContextParams,
    /// Annotation-to-nucleus matching distance in 20x pixels.
    pub match_radius_px: f64,
    /// Penalty multipliers in the order cancer, epidermis, lymphocyte, stromal.
    pub class_weights: [f64; 4],
    pub svm: SvmParams,
}

impl Default for CellConfig {
    fn default() -> Self {
        CellConfig {
            segment: SegmentParams::default(),
            local: LocalContextParams::default(),
            match_radius_px: 10.0,
            class_weights: [1.0; 4],
            svm: SvmParams::default(),
        }
    }
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 7,
            region: RegionConfig::default(),
            cell: CellConfig::default(),
            synthetic: SyntheticSpec::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Config =
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.region.slic.validate()?;
        if self.region.families.is_empty() {
            return Err(Error::InvalidArgument("no region feature families selected".into()));
        }
        if self.region.glcm_levels < 2 {
            return Err(Error::InvalidArgument("glcm_levels must be at least 2".into()));
        }
        if self.region.cv_folds < 2 {
            return Err(Error::InvalidArgument("cv_folds must be at least 2".into()));
        }
        for c in &self.region.subsample_classes {
            c.parse::<crate::superpix::RegionClass>()?;
        }
        let weights = self.region.class_weights.iter().chain(&self.cell.class_weights);
        if weights.clone().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidArgument("class weights must be positive".into()));
        }
        if !(self.region.svm.c > 0.0 && self.cell.svm.c > 0.0) {
            return Err(Error::InvalidArgument("C must be positive".into()));
        }
        Ok(())
    }
}
