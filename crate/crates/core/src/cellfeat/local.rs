use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cellseg::{NeighbourIndex, Nucleus};
use crate::imgcore::{otsu_from_histogram, BinaryMask, RasterImage};

pub const LOCAL_NAMES: [&str; 3] = ["neighbour_count", "kde_density", "cytoplasm_size"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalContextParams {
    pub neighbour_radius_um: f64,
    pub kde_bandwidth_um: f64,
    pub cytoplasm_radius_um: f64,
    pub pixel_size_um: f64,
}

impl Default for LocalContextParams {
    fn default() -> Self {
        LocalContextParams {
            neighbour_radius_um: 25.0,
            kde_bandwidth_um: 50.0,
            cytoplasm_radius_um: 25.0,
            pixel_size_um: crate::imgcore::PIXEL_SIZE_20X_UM,
        }
    }
}

/// Gaussian kernel density of nucleus centroids at `at`, in nuclei/µm².
/// Coordinates are in pixels; the sum includes a point at `at` itself.
pub fn kde_density(at: (f64, f64), centroids: &[(f64, f64)], bandwidth_um: f64, pixel_size_um: f64) -> f64 {
    let h2 = bandwidth_um * bandwidth_um;
    let norm = 1.0 / (2.0 * PI * h2);
    centroids
        .iter()
        .map(|&(x, y)| {
            let d2 = ((x - at.0).powi(2) + (y - at.1).powi(2)) * pixel_size_um * pixel_size_um;
            (-d2 / (2.0 * h2)).exp()
        })
        .sum::<f64>()
        * norm
}

/// `[neighbour count, density, cytoplasm size]` for nucleus `i` of a tile.
///
/// Cytoplasm size counts pixels in the disc around the centroid that are
/// outside the nuclear `foreground` and whose red value is at most the Otsu
/// threshold of red over those same pixels. Without red variance the count
/// is 0.
pub fn local_context_features(
    i: usize,
    nuclei: &[Nucleus],
    index: &NeighbourIndex,
    tile: &RasterImage,
    foreground: &BinaryMask,
    params: &LocalContextParams,
) -> [f64; 3] {
    let centroids: Vec<(f64, f64)> = nuclei.iter().map(|n| n.centroid).collect();
    let c = nuclei[i].centroid;
    let count = index.neighbours(i).len() as f64;
    let density = kde_density(c, &centroids, params.kde_bandwidth_um, params.pixel_size_um);

    let r = params.cytoplasm_radius_um / params.pixel_size_um;
    let (w, h) = (tile.width() as isize, tile.height() as isize);
    let x0 = ((c.0 - r).floor() as isize).max(0);
    let x1 = ((c.0 + r).ceil() as isize).min(w - 1);
    let y0 = ((c.1 - r).floor() as isize).max(0);
    let y1 = ((c.1 + r).ceil() as isize).min(h - 1);
    let mut reds = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (xu, yu) = (x as usize, y as usize);
            if (x as f64 - c.0).powi(2) + (y as f64 - c.1).powi(2) <= r * r && !foreground.get(xu, yu) {
                reds.push(tile.pixel(xu, yu)[0]);
            }
        }
    }
    let mut hist = [0u64; 256];
    for &v in &reds {
        hist[v as usize] += 1;
    }
    let cytoplasm = match otsu_from_histogram(&hist) {
        Ok(t) => reds.iter().filter(|&&v| v <= t).count() as f64,
        Err(_) => 0.0,
    };
    [count, density, cytoplasm]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::Magnification;

    fn disc_nucleus(cx: f64, cy: f64, r: f64, w: usize, h: usize) -> Nucleus {
        let px = (0..w * h)
            .filter(|&i| ((i % w) as f64 - cx).powi(2) + ((i / w) as f64 - cy).powi(2) <= r * r)
            .map(|i| i as u32)
            .collect();
        Nucleus::from_pixels(0, px, w, h, "t")
    }

    fn foreground_of(nuclei: &[Nucleus], w: usize, h: usize) -> BinaryMask {
        let mut m = BinaryMask::new(w, h);
        for n in nuclei {
            for &p in &n.pixels {
                m.set(p as usize % w, p as usize / w, true);
            }
        }
        m
    }

    #[test]
    fn isolated_nucleus_self_term() {
        let (w, h) = (120, 120);
        let nuclei = vec![disc_nucleus(60.0, 60.0, 6.0, w, h)];
        let tile = RasterImage::filled(w, h, [250, 250, 250], Magnification::x20()).unwrap();
        let idx = NeighbourIndex::for_nuclei(&nuclei, 25.0, 0.504).unwrap();
        let f = local_context_features(0, &nuclei, &idx, &tile, &foreground_of(&nuclei, w, h), &Default::default());
        assert_eq!(f[0], 0.0);
        assert!((f[1] - 1.0 / (2.0 * PI * 2500.0)).abs() < 1e-18);
        assert_eq!(f[2], 0.0);
    }

    #[test]
    fn pair_at_forty_pixels() {
        let (w, h) = (200, 100);
        let nuclei = vec![disc_nucleus(80.0, 50.0, 5.0, w, h), disc_nucleus(120.0, 50.0, 5.0, w, h)];
        let tile = RasterImage::filled(w, h, [250, 250, 250], Magnification::x20()).unwrap();
        let fg = foreground_of(&nuclei, w, h);
        let idx = NeighbourIndex::for_nuclei(&nuclei, 25.0, 0.504).unwrap();
        let a = local_context_features(0, &nuclei, &idx, &tile, &fg, &Default::default());
        let b = local_context_features(1, &nuclei, &idx, &tile, &fg, &Default::default());
        assert_eq!((a[0], b[0]), (1.0, 1.0));
        let d_um = 40.0 * 0.504;
        let expect = (1.0 + (-d_um * d_um / 5000.0f64).exp()) / (2.0 * PI * 2500.0);
        assert!((a[1] - expect).abs() < 1e-15);
        assert_eq!(a[1], b[1]);
    }

    #[test]
    fn painted_cytoplasm_ring() {
        let (w, h) = (160, 160);
        let (cx, cy) = (80.0, 80.0);
        let nuclei = vec![disc_nucleus(cx, cy, 8.0, w, h)];
        let ring = |x: f64, y: f64| {
            let d2 = (x - cx).powi(2) + (y - cy).powi(2);
            d2 > 64.0 && d2 <= 30.0 * 30.0
        };
        let tile = RasterImage::from_fn(w, h, Magnification::x20(), |x, y| {
            let (xf, yf) = (x as f64, y as f64);
            if (xf - cx).powi(2) + (yf - cy).powi(2) <= 64.0 {
                [60, 30, 100]
            } else if ring(xf, yf) {
                [225 - ((x + y) % 7) as u8, 150, 190]
            } else {
                [252 - ((x * y) % 3) as u8, 250, 251]
            }
        })
        .unwrap();
        let painted = (0..w * h).filter(|&i| ring((i % w) as f64, (i / w) as f64)).count() as f64;
        let idx = NeighbourIndex::for_nuclei(&nuclei, 25.0, 0.504).unwrap();
        let f = local_context_features(0, &nuclei, &idx, &tile, &foreground_of(&nuclei, w, h), &Default::default());
        assert!((f[2] - painted).abs() <= 0.1 * painted, "{} vs {painted}", f[2]);
    }
}
