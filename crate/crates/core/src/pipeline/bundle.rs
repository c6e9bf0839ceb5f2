use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regionfeat::FamilySet;
use crate::schema::{cell_schema_hash, region_schema_hash};
use crate::stain::ChannelStats;
use crate::svmkit::TrainedSvm;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Region,
    Cell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    /// Training samples per class, in class order.
    pub counts: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv_accuracy: Option<f64>,
}

/// A trained classifier with everything needed to apply it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub task: Task,
    pub classes: Vec<String>,
    pub feature_schema_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_families: Option<FamilySet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub glcm_levels: Option<usize>,
    #[serde(flatten)]
    pub svm: TrainedSvm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stain_target_stats: Option<ChannelStats>,
    pub training_metadata: TrainingMetadata,
}

/// Writes every float as a 17-significant-digit decimal.
struct FixedDigits;

impl serde_json::ser::Formatter for FixedDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }
}

/// Deterministic JSON with 17 significant digits per float.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedDigits);
    value.serialize(&mut ser).map_err(|e| Error::Parse(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

impl ModelBundle {
    /// Schema hash this build expects for the bundle's task and dimension.
    pub fn expected_schema_hash(&self) -> String {
        match self.task {
            Task::Region => region_schema_hash(),
            Task::Cell => cell_schema_hash(self.svm.dimension()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, to_json_bytes(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_slice(&bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let raw: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| Error::Parse(format!("model bundle: {e}")))?;
        let version = raw.get("format_version").and_then(serde_json::Value::as_u64);
        if version != Some(u64::from(FORMAT_VERSION)) {
            return Err(Error::IncompatibleModel(format!(
                "format_version {version:?}, this build reads {FORMAT_VERSION}"
            )));
        }
        let b: ModelBundle = serde_json::from_value(raw).map_err(|e| Error::Parse(format!("model bundle: {e}")))?;
        let expected = b.expected_schema_hash();
        if b.feature_schema_hash != expected {
            return Err(Error::IncompatibleModel(format!(
                "feature schema hash {} does not match this build ({expected})",
                b.feature_schema_hash
            )));
        }
        if b.classes.len() != b.svm.num_classes {
            return Err(Error::IncompatibleModel("class list does not match the classifier".into()));
        }
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svmkit::{svm_train, SvmParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bundle() -> ModelBundle {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<Vec<f64>> = (0..60)
            .map(|i| (0..94).map(|j| rng.random::<f64>() + if j == 0 { (i % 3) as f64 } else { 0.0 }).collect())
            .collect();
        let y: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let svm = svm_train(&x, &y, 4, &[1.0; 4], &SvmParams::default(), 0).unwrap();
        ModelBundle {
            format_version: FORMAT_VERSION,
            task: Task::Cell,
            classes: vec!["cancer".into(), "epidermis".into(), "lymphocyte".into(), "stromal".into()],
            feature_schema_hash: cell_schema_hash(94),
            feature_families: None,
            glcm_levels: None,
            svm,
            stain_target_stats: None,
            training_metadata: TrainingMetadata {
                seed: 0,
                counts: vec![20, 20, 20, 0],
                cv_accuracy: None,
            },
        }
    }

    #[test]
    fn round_trip_predicts_identically() {
        let b = bundle();
        let bytes = to_json_bytes(&b).unwrap();
        let back = ModelBundle::from_slice(&bytes).unwrap();
        assert_eq!(back, b);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let v: Vec<f64> = (0..94).map(|_| rng.random_range(-2.0..3.0)).collect();
            assert_eq!(b.svm.predict(&v).unwrap(), back.svm.predict(&v).unwrap());
        }
        assert_eq!(to_json_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn seventeen_digits() {
        let s = String::from_utf8(to_json_bytes(&vec![0.1f64, 1.0]).unwrap()).unwrap();
        assert_eq!(s, "[1.0000000000000001e-1,1.0000000000000000e0]\n");
    }

    #[test]
    fn truncated_file_is_parse_error() {
        let bytes = to_json_bytes(&bundle()).unwrap();
        assert!(matches!(ModelBundle::from_slice(&bytes[..bytes.len() / 2]), Err(Error::Parse(_))));
    }

    #[test]
    fn wrong_hash_or_version_is_incompatible() {
        let mut b = bundle();
        b.feature_schema_hash = "0".repeat(64);
        let bytes = to_json_bytes(&b).unwrap();
        assert!(matches!(ModelBundle::from_slice(&bytes), Err(Error::IncompatibleModel(_))));
        let mut b = bundle();
        b.format_version = 99;
        let bytes = to_json_bytes(&b).unwrap();
        assert!(matches!(ModelBundle::from_slice(&bytes), Err(Error::IncompatibleModel(_))));
    }
}
