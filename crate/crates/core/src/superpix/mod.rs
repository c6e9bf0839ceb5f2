//! Superpixel segmentation at region magnification, training-label
//! assignment from annotated polygons, and projection of region labels to
//! cell coordinates.

mod polygon;
mod slic;

pub use polygon::strictly_inside;
pub use slic::slic_segment;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::LabelMap;

/// Tissue region classes, in their fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionClass {
    Tumour,
    Stroma,
    Epidermis,
    Lumen,
}

impl RegionClass {
    pub const ALL: [RegionClass; 4] = [
        RegionClass::Tumour,
        RegionClass::Stroma,
        RegionClass::Epidermis,
        RegionClass::Lumen,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<RegionClass> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            RegionClass::Tumour => "tumour",
            RegionClass::Stroma => "stroma",
            RegionClass::Epidermis => "epidermis",
            RegionClass::Lumen => "lumen",
        }
    }
}

impl fmt::Display for RegionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RegionClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown region class {s:?}")))
    }
}

/// SLIC settings. `superpixel_size` is the target area `U` in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlicParams {
    pub superpixel_size: u64,
    pub compactness: f64,
    pub iterations: u32,
}

impl Default for SlicParams {
    fn default() -> Self {
        SlicParams {
            superpixel_size: 1250,
            compactness: 10.0,
            iterations: 10,
        }
    }
}

impl SlicParams {
    pub fn validate(&self) -> Result<()> {
        if self.superpixel_size == 0 || !(self.compactness > 0.0) || self.iterations == 0 {
            return Err(Error::InvalidArgument(format!("invalid SLIC parameters {self:?}")));
        }
        Ok(())
    }
}

/// Number of superpixels for an image of `image_size` pixels: `ceil(S / U)`.
pub fn superpixel_count(image_size: i64, superpixel_size: i64) -> Result<u64> {
    if image_size < 1 || superpixel_size < 1 {
        return Err(Error::InvalidArgument(format!(
            "image size {image_size} and superpixel size {superpixel_size} must be positive"
        )));
    }
    Ok((image_size as u64).div_ceil(superpixel_size as u64))
}

/// One SLIC segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Superpixel {
    pub id: usize,
    /// Mean member coordinate, rounded half-down to a pixel.
    pub centroid: (usize, usize),
    pub pixel_count: usize,
    /// Raster indices of member pixels, ascending.
    pub member_pixels: Vec<u32>,
    pub label: Option<RegionClass>,
}

impl Superpixel {
    /// Bounding box `(x0, y0, x1, y1)`, exclusive upper corner.
    pub fn bbox(&self, width: usize) -> (usize, usize, usize, usize) {
        let mut b = (usize::MAX, usize::MAX, 0, 0);
        for &p in &self.member_pixels {
            let (x, y) = (p as usize % width, p as usize / width);
            b.0 = b.0.min(x);
            b.1 = b.1.min(y);
            b.2 = b.2.max(x + 1);
            b.3 = b.3.max(y + 1);
        }
        b
    }
}

fn round_half_down(v: f64) -> usize {
    (v - 0.5).ceil().max(0.0) as usize
}

/// Builds superpixel records from a contiguous label map.
pub fn superpixels_from_labels(map: &LabelMap) -> Vec<Superpixel> {
    let mut sums = vec![(0u64, 0u64); map.num_labels];
    let mut members = vec![Vec::new(); map.num_labels];
    for (y, row) in map.labels.chunks_exact(map.width.max(1)).enumerate() {
        let base = (y * map.width) as u32;
        for (x, &l) in row.iter().enumerate() {
            let s = &mut sums[l as usize];
            s.0 += x as u64;
            s.1 += y as u64;
            members[l as usize].push(base + x as u32);
        }
    }
    members
        .into_iter()
        .zip(sums)
        .enumerate()
        .map(|(id, (member_pixels, (sx, sy)))| {
            let n = member_pixels.len();
            let cx = round_half_down(sx as f64 / n as f64);
            let cy = round_half_down(sy as f64 / n as f64);
            Superpixel {
                id,
                centroid: (cx, cy),
                pixel_count: n,
                member_pixels,
                label: None,
            }
        })
        .collect()
}

/// One annotated polygon, coordinates at region magnification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedRegion {
    pub class: RegionClass,
    pub polygon: Vec<[f64; 2]>,
}

/// Region annotation file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionAnnotations {
    pub magnification: String,
    pub regions: Vec<AnnotatedRegion>,
}

/// Class of the polygon strictly containing `point`, if exactly one class does.
pub fn class_at(regions: &[AnnotatedRegion], point: [f64; 2]) -> std::result::Result<Option<RegionClass>, ()> {
    let mut found: Option<RegionClass> = None;
    for r in regions {
        if strictly_inside(&r.polygon, point) {
            match found {
                Some(c) if c != r.class => return Err(()),
                _ => found = Some(r.class),
            }
        }
    }
    Ok(found)
}

/// Labels each superpixel with the class of the polygon strictly containing
/// its centroid. Superpixels outside every polygon stay unlabeled.
pub fn assign_training_labels(sps: &mut [Superpixel], regions: &[AnnotatedRegion]) -> Result<()> {
    for sp in sps.iter_mut() {
        let p = [sp.centroid.0 as f64, sp.centroid.1 as f64];
        sp.label = class_at(regions, p).map_err(|()| Error::AmbiguousAnnotation { superpixel: sp.id })?;
    }
    Ok(())
}

/// Region class at a cell-level coordinate: the superpixel containing pixel
/// `(floor(x / factor), floor(y / factor))` of the region label map.
pub fn project_region_label(
    cell_xy: (f64, f64),
    labelmap: &LabelMap,
    sp_labels: &[RegionClass],
    factor: u32,
) -> Result<RegionClass> {
    let (x, y) = cell_xy;
    let f = f64::from(factor);
    let (lx, ly) = ((x / f).floor(), (y / f).floor());
    if !(lx >= 0.0 && ly >= 0.0 && (lx as usize) < labelmap.width && (ly as usize) < labelmap.height) {
        return Err(Error::OutOfBounds { x, y });
    }
    let sp = labelmap.get(lx as usize, ly as usize) as usize;
    sp_labels
        .get(sp)
        .copied()
        .ok_or_else(|| Error::InvalidArgument(format!("no region label for superpixel {sp}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::{lab_planes, Magnification, RasterImage};

    #[test]
    fn count_matches_ceiling() {
        assert_eq!(superpixel_count(6_250_000, 1250).unwrap(), 5000);
        assert_eq!(superpixel_count(1250, 1250).unwrap(), 1);
        assert_eq!(superpixel_count(1251, 1250).unwrap(), 2);
        assert!(superpixel_count(0, 1250).is_err());
        assert!(superpixel_count(10, -1).is_err());
    }

    #[test]
    fn mean_superpixel_side() {
        // √1250 px at 8.064 µm/px ≈ 285 µm, the stated ≈280 µm.
        let side = 1250f64.sqrt();
        assert!((side - 35.36).abs() < 0.01);
        let um = side * Magnification::x1_25().pixel_size_um;
        assert!((um - 280.0).abs() < 10.0);
    }

    #[test]
    fn centroid_rounds_half_down() {
        assert_eq!(round_half_down(2.5), 2);
        assert_eq!(round_half_down(2.51), 3);
        assert_eq!(round_half_down(0.0), 0);
    }

    fn sp_at(id: usize, c: (usize, usize)) -> Superpixel {
        Superpixel {
            id,
            centroid: c,
            pixel_count: 1,
            member_pixels: vec![0],
            label: None,
        }
    }

    fn square(class: RegionClass, x0: f64, x1: f64) -> AnnotatedRegion {
        AnnotatedRegion {
            class,
            polygon: vec![[x0, x0], [x1, x0], [x1, x1], [x0, x1]],
        }
    }

    #[test]
    fn training_labels_by_centroid() {
        let regions = [square(RegionClass::Tumour, 0.0, 10.0)];
        let mut sps = vec![sp_at(0, (5, 5)), sp_at(1, (20, 20)), sp_at(2, (10, 5))];
        assign_training_labels(&mut sps, &regions).unwrap();
        assert_eq!(sps[0].label, Some(RegionClass::Tumour));
        assert_eq!(sps[1].label, None);
        assert_eq!(sps[2].label, None);
    }

    #[test]
    fn overlapping_classes_are_ambiguous() {
        let regions = [square(RegionClass::Tumour, 0.0, 10.0), square(RegionClass::Stroma, 2.0, 8.0)];
        let mut sps = vec![sp_at(0, (1, 1)), sp_at(7, (5, 5))];
        let err = assign_training_labels(&mut sps, &regions).unwrap_err();
        assert!(matches!(err, Error::AmbiguousAnnotation { superpixel: 7 }));
    }

    #[test]
    fn projection_divides_by_sixteen() {
        let map = LabelMap {
            width: 300,
            height: 200,
            labels: (0..300 * 200).map(|i| u32::from(i % 300 >= 150)).collect(),
            num_labels: 2,
        };
        let labels = [RegionClass::Stroma, RegionClass::Tumour];
        assert_eq!(project_region_label((3200.0, 1600.0), &map, &labels, 16).unwrap(), RegionClass::Tumour);
        assert_eq!(project_region_label((0.0, 0.0), &map, &labels, 16).unwrap(), RegionClass::Stroma);
        assert!(matches!(
            project_region_label((4800.0, 10.0), &map, &labels, 16),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(project_region_label((-1.0, 10.0), &map, &labels, 16).is_err());
    }

    #[test]
    fn slic_constant_image_grid() {
        let img = RasterImage::filled(200, 200, [200, 150, 190], Magnification::x1_25()).unwrap();
        let (map, sps) = slic_segment(&lab_planes(&img), 100, &SlicParams::default()).unwrap();
        assert!((80..=120).contains(&sps.len()), "{}", sps.len());
        assert_eq!(map.num_labels, sps.len());
        assert_eq!(sps.iter().map(|s| s.pixel_count).sum::<usize>(), 200 * 200);
    }

    #[test]
    fn slic_quadrants_exact() {
        let colors = [[230, 40, 40], [40, 200, 40], [40, 40, 220], [240, 240, 240]];
        let img = RasterImage::from_fn(100, 100, Magnification::x1_25(), |x, y| {
            colors[usize::from(x >= 50) + 2 * usize::from(y >= 50)]
        })
        .unwrap();
        let (map, sps) = slic_segment(&lab_planes(&img), 4, &SlicParams::default()).unwrap();
        assert_eq!(sps.len(), 4);
        for y in 0..100 {
            for x in 0..100 {
                let q = usize::from(x >= 50) + 2 * usize::from(y >= 50);
                assert_eq!(map.get(x, y) as usize, q, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn slic_rejects_too_many_segments() {
        let img = RasterImage::filled(4, 4, [1, 2, 3], Magnification::x1_25()).unwrap();
        assert!(slic_segment(&lab_planes(&img), 17, &SlicParams::default()).is_err());
        assert!(slic_segment(&lab_planes(&img), 0, &SlicParams::default()).is_err());
        assert!(slic_segment(&lab_planes(&img), 16, &SlicParams::default()).is_ok());
    }
}
