use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cellfeat::CellClass;
use crate::error::{Error, Result};
use crate::superpix::{AnnotatedRegion, RegionAnnotations};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One 20x tile of an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileEntry {
    pub id: String,
    pub path: PathBuf,
    /// Top-left corner in 20x image coordinates.
    pub origin: [u64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image: PathBuf,
    pub magnification: String,
    pub pixel_size_um: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regions: Option<PathBuf>,
    #[serde(default)]
    pub tiles: Vec<TileEntry>,
    pub split: Split,
}

/// List of images with annotations. Relative paths are resolved against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub images: Vec<ManifestEntry>,
    #[serde(skip)]
    pub root: PathBuf,
}

impl CorpusManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: CorpusManifest =
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        let mut tiles = HashSet::new();
        for e in &self.images {
            if !ids.insert(e.id.as_str()) {
                return Err(Error::Parse(format!("image id {:?} appears twice", e.id)));
            }
            if !(e.pixel_size_um.is_finite() && e.pixel_size_um > 0.0) {
                return Err(Error::Parse(format!("image {:?} has invalid pixel size", e.id)));
            }
            let mut paths = vec![&e.image];
            paths.extend(e.regions.as_ref());
            for t in &e.tiles {
                if !tiles.insert((e.id.as_str(), t.id.as_str())) {
                    return Err(Error::Parse(format!("tile {:?} of {:?} appears twice", t.id, e.id)));
                }
                paths.push(&t.path);
                paths.extend(t.cells.as_ref());
            }
            for p in paths {
                let full = self.resolve(p);
                if !full.exists() {
                    return Err(Error::io(
                        full,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "referenced by manifest"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.images.iter().filter(move |e| e.split == split)
    }
}

/// Region polygons scaled to `target_pixel_size_um`.
pub fn load_region_annotations(path: &Path, target_pixel_size_um: f64) -> Result<Vec<AnnotatedRegion>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ann: RegionAnnotations =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let source = magnification_pixel_size(&ann.magnification)?;
    let s = source / target_pixel_size_um;
    Ok(ann
        .regions
        .into_iter()
        .map(|r| AnnotatedRegion {
            class: r.class,
            polygon: r.polygon.iter().map(|&[x, y]| [x * s, y * s]).collect(),
        })
        .collect())
}

/// Pixel size in µm for a magnification tag such as `20x` or `1.25x`.
pub fn magnification_pixel_size(tag: &str) -> Result<f64> {
    let mag: f64 = tag
        .trim()
        .trim_end_matches(['x', 'X'])
        .parse()
        .map_err(|_| Error::Parse(format!("bad magnification {tag:?}")))?;
    if !(mag > 0.0) {
        return Err(Error::Parse(format!("bad magnification {tag:?}")));
    }
    Ok(crate::imgcore::PIXEL_SIZE_20X_UM * 20.0 / mag)
}

/// One ground-truth cell: tile-local 20x coordinates and class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellAnnotation {
    pub x: f64,
    pub y: f64,
    pub class: CellClass,
}

pub fn load_cell_annotations(path: &Path) -> Result<Vec<CellAnnotation>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Parse(format!("{}: {e}", path.display()))))
        .collect()
}

pub fn write_cell_annotations(path: &Path, cells: &[CellAnnotation]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    for c in cells {
        w.serialize(c).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn magnification_tags() {
        assert!((magnification_pixel_size("20x").unwrap() - 0.504).abs() < 1e-12);
        assert!((magnification_pixel_size("1.25x").unwrap() - 8.064).abs() < 1e-12);
        assert!(magnification_pixel_size("big").is_err());
    }

    #[test]
    fn cell_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let cells = vec![
            CellAnnotation {
                x: 1.5,
                y: 2.0,
                class: CellClass::Lymphocyte,
            },
            CellAnnotation {
                x: 10.0,
                y: 0.0,
                class: CellClass::Stromal,
            },
        ];
        write_cell_annotations(&p, &cells).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("x,y,class\n"));
        assert_eq!(load_cell_annotations(&p).unwrap(), cells);
    }

    #[test]
    fn region_polygons_rescaled() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        std::fs::write(&p, r#"{"magnification":"20x","regions":[{"class":"lumen","polygon":[[0,0],[160,0],[0,32]]}]}"#)
            .unwrap();
        let r = load_region_annotations(&p, 8.064).unwrap();
        assert_eq!(r[0].polygon, vec![[0.0, 0.0], [10.0, 0.0], [0.0, 2.0]]);
    }

    #[test]
    fn missing_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        std::fs::write(
            &p,
            r#"{"images":[{"id":"a","image":"nope.png","magnification":"1.25x","pixel_size_um":8.064,"split":"train"}]}"#,
        )
        .unwrap();
        assert!(matches!(CorpusManifest::load(&p), Err(Error::Io { .. })));
    }
}
