//! Nucleus segmentation in 20x tiles and the radius neighbour index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{
    morph_open, otsu_threshold, to_gray, watershed_split, BinaryMask, RasterImage, DEFAULT_H_MIN,
};

/// Radius of the local neighbourhood, in micrometres.
pub const NEIGHBOUR_RADIUS_UM: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentParams {
    pub min_area: usize,
    pub max_area: usize,
    pub open_radius: usize,
    pub h_min: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            min_area: 20,
            max_area: 2000,
            open_radius: 2,
            h_min: DEFAULT_H_MIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nucleus {
    pub id: usize,
    /// Mean of member pixel coordinates in tile pixels.
    pub centroid: (f64, f64),
    /// Raster indices into the tile, ascending.
    pub pixels: Vec<u32>,
    pub area: usize,
    /// `(x0, y0, x1, y1)`, exclusive upper corner.
    pub bbox: (usize, usize, usize, usize),
    pub touches_border: bool,
    pub tile_id: String,
}

impl Nucleus {
    /// Builds a nucleus from raster indices of a tile `width × height`.
    pub fn from_pixels(id: usize, mut pixels: Vec<u32>, width: usize, height: usize, tile_id: &str) -> Self {
        pixels.sort_unstable();
        let (mut sx, mut sy) = (0u64, 0u64);
        let mut bbox = (usize::MAX, usize::MAX, 0, 0);
        for &p in &pixels {
            let (x, y) = (p as usize % width, p as usize / width);
            sx += x as u64;
            sy += y as u64;
            bbox = (bbox.0.min(x), bbox.1.min(y), bbox.2.max(x + 1), bbox.3.max(y + 1));
        }
        let n = pixels.len();
        Nucleus {
            id,
            centroid: (sx as f64 / n as f64, sy as f64 / n as f64),
            area: n,
            touches_border: bbox.0 == 0 || bbox.1 == 0 || bbox.2 == width || bbox.3 == height,
            bbox,
            pixels,
            tile_id: tile_id.to_string(),
        }
    }

    /// Local mask over the bounding box.
    pub fn local_mask(&self, width: usize) -> BinaryMask {
        let (x0, y0, x1, y1) = self.bbox;
        let mut m = BinaryMask::new(x1 - x0, y1 - y0);
        for &p in &self.pixels {
            m.set(p as usize % width - x0, p as usize / width - y0, true);
        }
        m
    }
}

/// Segmentation result: the nuclei plus the opened foreground they came from.
#[derive(Debug, Clone)]
pub struct Segmentation {
    pub nuclei: Vec<Nucleus>,
    pub foreground: BinaryMask,
}

/// Segments dark nuclei: Otsu on inverted luminance, opening, watershed
/// split, area filter. Nuclei are ordered by centroid `(y, x)` and numbered
/// in that order. A blank tile yields no nuclei.
pub fn segment_nuclei(tile: &RasterImage, tile_id: &str, params: &SegmentParams) -> Segmentation {
    let (w, h) = (tile.width(), tile.height());
    let inv = to_gray(tile).inverted();
    let t = match otsu_threshold(&inv) {
        Ok(t) => t,
        Err(_) => {
            return Segmentation {
                nuclei: Vec::new(),
                foreground: BinaryMask::new(w, h),
            }
        }
    };
    let fg = morph_open(&BinaryMask::threshold_above(&inv, t), params.open_radius);
    let labels = watershed_split(&fg, params.h_min);
    let mut nuclei: Vec<Nucleus> = labels
        .members()
        .into_iter()
        .skip(1)
        .filter(|m| (params.min_area..=params.max_area).contains(&m.len()))
        .map(|m| Nucleus::from_pixels(0, m, w, h, tile_id))
        .collect();
    nuclei.sort_by(|a, b| {
        a.centroid
            .1
            .total_cmp(&b.centroid.1)
            .then(a.centroid.0.total_cmp(&b.centroid.0))
            .then(a.pixels[0].cmp(&b.pixels[0]))
    });
    for (i, n) in nuclei.iter_mut().enumerate() {
        n.id = i;
    }
    Segmentation {
        nuclei,
        foreground: fg,
    }
}

/// Uniform-grid index answering "all centroids within `radius`" queries.
#[derive(Debug, Clone)]
pub struct NeighbourIndex {
    points: Vec<(f64, f64)>,
    radius: f64,
    cell: f64,
    origin: (f64, f64),
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<usize>>,
}

impl NeighbourIndex {
    pub fn new(points: Vec<(f64, f64)>, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidArgument(format!("neighbour radius {radius}")));
        }
        let (mut minx, mut miny, mut maxx, mut maxy) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        if let Some(&(x, y)) = points.first() {
            (minx, miny, maxx, maxy) = (x, y, x, y);
        }
        for &(x, y) in &points {
            minx = minx.min(x);
            miny = miny.min(y);
            maxx = maxx.max(x);
            maxy = maxy.max(y);
        }
        let cell = radius;
        let cols = ((maxx - minx) / cell).floor() as usize + 1;
        let rows = ((maxy - miny) / cell).floor() as usize + 1;
        let mut buckets = vec![Vec::new(); cols * rows];
        let origin = (minx, miny);
        for (i, &(x, y)) in points.iter().enumerate() {
            let cx = ((x - minx) / cell).floor() as usize;
            let cy = ((y - miny) / cell).floor() as usize;
            buckets[cy * cols + cx].push(i);
        }
        Ok(NeighbourIndex {
            points,
            radius,
            cell,
            origin,
            cols,
            rows,
            buckets,
        })
    }

    /// Index of nuclei for a tile using the 20x pixel size.
    pub fn for_nuclei(nuclei: &[Nucleus], radius_um: f64, pixel_size_um: f64) -> Result<Self> {
        NeighbourIndex::new(nuclei.iter().map(|n| n.centroid).collect(), radius_um / pixel_size_um)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Other points with Euclidean distance `<= radius`, ascending.
    pub fn neighbours(&self, i: usize) -> Vec<usize> {
        let (x, y) = self.points[i];
        let cx = ((x - self.origin.0) / self.cell).floor() as isize;
        let cy = ((y - self.origin.1) / self.cell).floor() as isize;
        let r2 = self.radius * self.radius;
        let mut out = Vec::new();
        for by in (cy - 1).max(0)..=(cy + 1).min(self.rows as isize - 1) {
            for bx in (cx - 1).max(0)..=(cx + 1).min(self.cols as isize - 1) {
                for &j in &self.buckets[by as usize * self.cols + bx as usize] {
                    if j == i {
                        continue;
                    }
                    let (px, py) = self.points[j];
                    if (px - x).powi(2) + (py - y).powi(2) <= r2 {
                        out.push(j);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Neighbours of nucleus `i` among `nuclei` within `radius_um`.
pub fn nucleus_neighborhood(i: usize, nuclei: &[Nucleus], radius_um: f64, pixel_size_um: f64) -> Result<Vec<usize>> {
    Ok(NeighbourIndex::for_nuclei(nuclei, radius_um, pixel_size_um)?.neighbours(i))
}
