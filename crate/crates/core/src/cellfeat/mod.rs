//! Per-nucleus features: 91 morphological, 3 local context and an optional
//! 4-dimension one-hot global context.

mod local;
mod morphology;

pub use local::{kde_density, local_context_features, LocalContextParams, LOCAL_NAMES};
pub use morphology::{morphology_features, morphology_names, MorphologyFeatures, MORPHOLOGY_LEN};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::superpix::RegionClass;

pub const CELL_SCHEMA_VERSION: &str = "cell-1";
pub const LOCAL_LEN: usize = 3;
pub const GLOBAL_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellClass {
    Cancer,
    Epidermis,
    Lymphocyte,
    Stromal,
}

impl CellClass {
    /// Fixed class order, also used to break probability ties.
    pub const ALL: [CellClass; 4] = [
        CellClass::Cancer,
        CellClass::Epidermis,
        CellClass::Lymphocyte,
        CellClass::Stromal,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<CellClass> {
        CellClass::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            CellClass::Cancer => "cancer",
            CellClass::Epidermis => "epidermis",
            CellClass::Lymphocyte => "lymphocyte",
            CellClass::Stromal => "stromal",
        }
    }
}

impl fmt::Display for CellClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CellClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CellClass::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown cell class {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFeatureVector {
    pub morphology: Vec<f64>,
    pub local: [f64; LOCAL_LEN],
    pub global: Option<[f64; GLOBAL_LEN]>,
    pub schema_version: String,
}

impl CellFeatureVector {
    pub fn new(morphology: Vec<f64>, local: [f64; LOCAL_LEN]) -> Result<Self> {
        if morphology.len() != MORPHOLOGY_LEN {
            return Err(Error::InvalidFeature(format!(
                "expected {MORPHOLOGY_LEN} morphological values, got {}",
                morphology.len()
            )));
        }
        Ok(CellFeatureVector {
            morphology,
            local,
            global: None,
            schema_version: CELL_SCHEMA_VERSION.to_string(),
        })
    }

    /// Concatenation `[morphology | local | global?]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.morphology.clone();
        v.extend_from_slice(&self.local);
        if let Some(g) = self.global {
            v.extend_from_slice(&g);
        }
        v
    }

    pub fn len(&self) -> usize {
        MORPHOLOGY_LEN + LOCAL_LEN + if self.global.is_some() { GLOBAL_LEN } else { 0 }
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// One-hot region encoding in the order Tumour, Stroma, Epidermis, Lumen.
pub fn region_one_hot(region: RegionClass) -> [f64; GLOBAL_LEN] {
    let mut g = [0.0; GLOBAL_LEN];
    g[region.index()] = 1.0;
    g
}

/// Sets the global context to the one-hot encoding of `region`, replacing
/// any previous value.
pub fn attach_global_context(mut vec: CellFeatureVector, region: RegionClass) -> CellFeatureVector {
    vec.global = Some(region_one_hot(region));
    vec
}
