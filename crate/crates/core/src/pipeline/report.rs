//! Run reports, per-cell CSV files, ROC points and overlays.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Config;
use super::manifest::CorpusManifest;
use super::predict::{CellPrediction, ImagePrediction, Mode};
use super::region::{region_confusion, RegionPrediction, SegmentedImage};
use crate::cellfeat::CellClass;
use crate::error::{Error, Result};
use crate::imgcore::{load_rgb, save_rgb, Magnification, RasterImage};
use crate::superpix::RegionClass;
use crate::svmkit::{evaluate, roc_auc, ConfusionMatrix, Metrics, RocCurve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

impl Evaluation {
    /// `None` for an empty matrix.
    pub fn of(confusion: ConfusionMatrix) -> Option<Self> {
        let metrics = evaluate(&confusion).ok()?;
        Some(Evaluation { confusion, metrics })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageBreakdown {
    pub image: String,
    pub cells: usize,
    pub matched: usize,
    pub unmatched_annotations: usize,
    pub missing_context: usize,
    pub evaluation: Option<Evaluation>,
}

/// Deterministic summary of a prediction run. Wall-clock timings are kept
/// in a separate file so that reports of identical runs are identical.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub mode: Mode,
    pub config: Config,
    pub cells: usize,
    pub matched: usize,
    pub unmatched_annotations: usize,
    pub missing_context: usize,
    pub cell: Option<Evaluation>,
    /// Cancer against all other classes, scored by the cancer probability.
    pub roc_cancer: Option<RocCurve>,
    pub region: Option<Evaluation>,
    pub per_image: Vec<ImageBreakdown>,
}

fn cell_classes() -> Vec<String> {
    CellClass::ALL.iter().map(|c| c.name().to_string()).collect()
}

/// Confusion matrix of cells with a matched annotation.
pub fn cell_confusion<'a>(cells: impl IntoIterator<Item = &'a CellPrediction>) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::new(cell_classes());
    for c in cells {
        if let Some(t) = c.truth {
            cm.add(t.index(), c.predicted.index());
        }
    }
    cm
}

/// ROC of cancer against the rest over matched cells.
pub fn cancer_roc<'a>(cells: impl IntoIterator<Item = &'a CellPrediction>) -> Option<RocCurve> {
    let (scores, positive): (Vec<f64>, Vec<bool>) = cells
        .into_iter()
        .filter_map(|c| c.truth.map(|t| (c.probs[CellClass::Cancer.index()], t == CellClass::Cancer)))
        .unzip();
    roc_auc(&scores, &positive).ok()
}

pub fn build_report(mode: Mode, config: &Config, preds: &[ImagePrediction]) -> RunReport {
    let all = || preds.iter().flat_map(|p| p.cells.iter());
    let per_image = preds
        .iter()
        .map(|p| ImageBreakdown {
            image: p.image.clone(),
            cells: p.cells.len(),
            matched: p.cells.iter().filter(|c| c.truth.is_some()).count(),
            unmatched_annotations: p.unmatched_annotations,
            missing_context: p.missing_context,
            evaluation: Evaluation::of(cell_confusion(&p.cells)),
        })
        .collect::<Vec<_>>();
    let regions: Vec<&RegionPrediction> = preds.iter().filter_map(|p| p.regions.as_ref()).collect();
    RunReport {
        mode,
        config: config.clone(),
        cells: all().count(),
        matched: all().filter(|c| c.truth.is_some()).count(),
        unmatched_annotations: preds.iter().map(|p| p.unmatched_annotations).sum(),
        missing_context: preds.iter().map(|p| p.missing_context).sum(),
        cell: Evaluation::of(cell_confusion(all())),
        roc_cancer: cancer_roc(all()),
        region: if regions.is_empty() {
            None
        } else {
            Evaluation::of(region_confusion(regions))
        },
        per_image,
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Column order of the per-cell CSV.
pub const CELL_CSV_HEADER: [&str; 9] = [
    "x",
    "y",
    "true",
    "predicted",
    "p_cancer",
    "p_epidermis",
    "p_lymphocyte",
    "p_stromal",
    "region",
];

pub fn write_cell_csv(path: &Path, cells: &[CellPrediction]) -> Result<()> {
    let err = |e: csv::Error| Error::Parse(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(CELL_CSV_HEADER).map_err(err)?;
    for c in cells {
        let mut row = vec![
            format!("{:.3}", c.x),
            format!("{:.3}", c.y),
            c.truth.map(|t| t.name().to_string()).unwrap_or_default(),
            c.predicted.name().to_string(),
        ];
        row.extend(c.probs.iter().map(|p| format!("{p:.6}")));
        row.push(c.region.map(|r| r.name().to_string()).unwrap_or_default());
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a per-cell CSV back; used by offline evaluation.
pub fn read_cell_csv(path: &Path) -> Result<Vec<CellPrediction>> {
    let perr = |m: String| Error::Parse(format!("{}: {m}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| perr(e.to_string()))?;
    let header = r.headers().map_err(|e| perr(e.to_string()))?.clone();
    if header.iter().ne(CELL_CSV_HEADER) {
        return Err(perr(format!("unexpected header {header:?}")));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| perr(format!("{s:?}: {e}")));
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| perr(e.to_string()))?;
            let opt_cell = |s: &str| if s.is_empty() { Ok(None) } else { s.parse().map(Some) };
            Ok(CellPrediction {
                tile: String::new(),
                x: num(&rec[0])?,
                y: num(&rec[1])?,
                truth: opt_cell(&rec[2])?,
                predicted: rec[3].parse()?,
                probs: [num(&rec[4])?, num(&rec[5])?, num(&rec[6])?, num(&rec[7])?],
                region: if rec[8].is_empty() {
                    None
                } else {
                    Some(rec[8].parse::<RegionClass>()?)
                },
            })
        })
        .collect()
}

pub fn write_roc_csv(path: &Path, roc: &RocCurve) -> Result<()> {
    let err = |e: csv::Error| Error::Parse(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["threshold", "fpr", "tpr"]).map_err(err)?;
    for p in &roc.points {
        w.write_record([p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const REGION_COLORS: [[u8; 3]; 4] = [[220, 30, 30], [30, 170, 60], [240, 200, 0], [40, 90, 230]];
pub const CELL_COLORS: [[u8; 3]; 4] = [[255, 0, 0], [255, 200, 0], [0, 90, 255], [0, 200, 60]];

/// Region image with each superpixel boundary pixel painted `color(superpixel)`.
pub fn boundary_overlay(seg: &SegmentedImage, color: impl Fn(usize) -> [u8; 3]) -> RasterImage {
    let map = &seg.labelmap;
    let mut out = seg.image.clone();
    for y in 0..map.height {
        for x in 0..map.width {
            let l = map.get(x, y);
            let edge = (x + 1 < map.width && map.get(x + 1, y) != l) || (y + 1 < map.height && map.get(x, y + 1) != l);
            if edge {
                out.set_pixel(x, y, color(l as usize));
            }
        }
    }
    out
}

/// Superpixel boundaries drawn in the predicted class color.
pub fn region_overlay(pred: &RegionPrediction) -> RasterImage {
    boundary_overlay(&pred.segmented, |sp| REGION_COLORS[pred.predicted[sp].index()])
}

/// Tile with a small square at each cell centroid in the predicted class color.
pub fn cell_overlay(tile: &RasterImage, origin: [u64; 2], cells: &[&CellPrediction]) -> RasterImage {
    let mut out = tile.clone();
    let (w, h) = (tile.width() as i64, tile.height() as i64);
    for c in cells {
        let cx = (c.x - origin[0] as f64).round() as i64;
        let cy = (c.y - origin[1] as f64).round() as i64;
        for dy in -2..=2 {
            for dx in -2..=2 {
                let (x, y) = (cx + dx, cy + dy);
                if x >= 0 && y >= 0 && x < w && y < h {
                    out.set_pixel(x as usize, y as usize, CELL_COLORS[c.predicted.index()]);
                }
            }
        }
    }
    out
}

/// Writes region and cell overlays of every image under `dir`.
pub fn write_overlays(dir: &Path, manifest: &CorpusManifest, preds: &[ImagePrediction]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for p in preds {
        if let Some(r) = &p.regions {
            save_rgb(&dir.join(format!("{}_regions.png", p.image)), &region_overlay(r))?;
        }
        let Some(entry) = manifest.images.iter().find(|e| e.id == p.image) else {
            continue;
        };
        for t in &entry.tiles {
            let tile = load_rgb(&manifest.resolve(&t.path), Magnification::x20())?;
            let cells: Vec<&CellPrediction> = p.cells.iter().filter(|c| c.tile == t.id).collect();
            save_rgb(
                &dir.join(format!("{}_{}_cells.png", p.image, t.id)),
                &cell_overlay(&tile, t.origin, &cells),
            )?;
        }
    }
    Ok(())
}

/// Writes `report.json`, per-image cell CSVs under `cells/` and, when
/// available, `roc_cancer.csv`.
pub fn write_run(out: &Path, report: &RunReport, preds: &[ImagePrediction]) -> Result<()> {
    let cells_dir = out.join("cells");
    std::fs::create_dir_all(&cells_dir).map_err(|e| Error::io(&cells_dir, e))?;
    write_json(&out.join("report.json"), report)?;
    for p in preds {
        write_cell_csv(&cells_dir.join(format!("{}.csv", p.image)), &p.cells)?;
    }
    if let Some(roc) = &report.roc_cancer {
        write_roc_csv(&out.join("roc_cancer.csv"), roc)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(truth: Option<CellClass>, predicted: CellClass, p_cancer: f64) -> CellPrediction {
        CellPrediction {
            tile: "t0".into(),
            x: 1.25,
            y: 2.0,
            truth,
            predicted,
            probs: [p_cancer, 1.0 - p_cancer, 0.0, 0.0],
            region: Some(RegionClass::Tumour),
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let cells = vec![
            cell(Some(CellClass::Cancer), CellClass::Cancer, 0.75),
            cell(None, CellClass::Epidermis, 0.125),
        ];
        write_cell_csv(&p, &cells).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("x,y,true,predicted,p_cancer,p_epidermis,p_lymphocyte,p_stromal,region\n"));
        let back = read_cell_csv(&p).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].truth, Some(CellClass::Cancer));
        assert_eq!(back[1].truth, None);
        assert_eq!(back[1].probs[0], 0.125);
        assert_eq!(cell_confusion(&back), cell_confusion(&cells));
    }

    #[test]
    fn report_metrics_match_confusion() {
        let cells = vec![
            cell(Some(CellClass::Cancer), CellClass::Cancer, 0.9),
            cell(Some(CellClass::Epidermis), CellClass::Cancer, 0.6),
            cell(Some(CellClass::Epidermis), CellClass::Epidermis, 0.1),
            cell(None, CellClass::Stromal, 0.3),
        ];
        let preds = vec![ImagePrediction {
            image: "a".into(),
            cells,
            unmatched_annotations: 1,
            missing_context: 0,
            regions: None,
        }];
        let r = build_report(Mode::Voting, &Config::default(), &preds);
        let e = r.cell.as_ref().unwrap();
        assert_eq!(e.metrics, evaluate(&e.confusion).unwrap());
        assert!((e.metrics.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.matched, 3);
        assert_eq!(r.roc_cancer.as_ref().unwrap().auc, 1.0);
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"mode\":\"voting\""));
    }
}
