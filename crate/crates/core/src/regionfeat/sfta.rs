//! Segmentation-based fractal texture features reduced to seven values.
//!
//! A single Otsu threshold over the masked pixels splits the patch into a
//! low set (`<= t`) and a high set (`> t`). Each set contributes the
//! box-counting dimension of its border, its mean gray level and its pixel
//! count. The seventh value is the box-counting dimension of the edge map
//! between the two sets.

use crate::error::{Error, Result};
use crate::imgcore::{histogram, otsu_from_histogram, BinaryMask, GrayImage};

pub const SFTA_NAMES: [&str; 7] = [
    "low_border_fractal_dimension",
    "low_mean_gray",
    "low_pixel_count",
    "high_border_fractal_dimension",
    "high_mean_gray",
    "high_pixel_count",
    "edge_fractal_dimension",
];

/// Box sizes used for box counting.
pub const BOX_SCALES: [usize; 4] = [1, 2, 4, 8];

/// Box-counting dimension of a pixel set: minus the least-squares slope of
/// `ln N(s)` against `ln s`, with boxes aligned to the image origin.
/// An empty set has dimension 0.
pub fn box_counting_dimension(set: &BinaryMask) -> f64 {
    if !set.data.iter().any(|&v| v) {
        return 0.0;
    }
    let pts: Vec<(f64, f64)> = BOX_SCALES
        .iter()
        .map(|&s| {
            let bw = set.width.div_ceil(s);
            let bh = set.height.div_ceil(s);
            let mut hit = vec![false; bw * bh];
            for y in 0..set.height {
                for x in 0..set.width {
                    if set.get(x, y) {
                        hit[(y / s) * bw + x / s] = true;
                    }
                }
            }
            let n = hit.iter().filter(|&&b| b).count();
            ((s as f64).ln(), (n as f64).ln())
        })
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    -sxy / sxx
}

/// Pixels of `set` with a 4-neighbour outside the set (or outside the image).
pub fn border(set: &BinaryMask) -> BinaryMask {
    let (w, h) = (set.width, set.height);
    BinaryMask::from_fn(w, h, |x, y| {
        set.get(x, y)
            && (x == 0
                || y == 0
                || x + 1 == w
                || y + 1 == h
                || !set.get(x - 1, y)
                || !set.get(x + 1, y)
                || !set.get(x, y - 1)
                || !set.get(x, y + 1))
    })
}

pub fn sfta_features(gray: &GrayImage, mask: &BinaryMask) -> Result<[f64; 7]> {
    let masked = || gray.data.iter().zip(&mask.data).filter(|(_, &m)| m).map(|(&v, _)| v);
    let t = otsu_from_histogram(&histogram(masked()))
        .map_err(|_| Error::DegenerateTexture("fewer than two gray levels for SFTA"))?;
    let (w, h) = (gray.width, gray.height);
    let low = BinaryMask::from_fn(w, h, |x, y| mask.get(x, y) && gray.get(x, y) <= t);
    let high = BinaryMask::from_fn(w, h, |x, y| mask.get(x, y) && gray.get(x, y) > t);
    let edges = BinaryMask::from_fn(w, h, |x, y| {
        if !mask.get(x, y) {
            return false;
        }
        let is_high = high.get(x, y);
        [(0isize, -1isize), (-1, 0), (1, 0), (0, 1)].iter().any(|&(dx, dy)| {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            nx >= 0
                && ny >= 0
                && (nx as usize) < w
                && (ny as usize) < h
                && mask.get(nx as usize, ny as usize)
                && high.get(nx as usize, ny as usize) != is_high
        })
    });
    let set_stats = |set: &BinaryMask| {
        let (sum, n) = gray
            .data
            .iter()
            .zip(&set.data)
            .filter(|(_, &m)| m)
            .fold((0u64, 0u64), |(s, n), (&v, _)| (s + u64::from(v), n + 1));
        let mean = if n > 0 { sum as f64 / n as f64 } else { 0.0 };
        (box_counting_dimension(&border(set)), mean, n as f64)
    };
    let (lfd, lmean, ln) = set_stats(&low);
    let (hfd, hmean, hn) = set_stats(&high);
    Ok([lfd, lmean, ln, hfd, hmean, hn, box_counting_dimension(&edges)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filled_square_mean_and_area() {
        let g = GrayImage::from_fn(20, 20, |x, y| if (5..15).contains(&x) && (5..15).contains(&y) { 200 } else { 50 })
            .unwrap();
        let m = BinaryMask::from_fn(20, 20, |_, _| true);
        let f = sfta_features(&g, &m).unwrap();
        assert_eq!(f[4], 200.0);
        assert_eq!(f[5], 100.0);
        assert_eq!(f[1], 50.0);
        assert_eq!(f[2], 300.0);
    }

    #[test]
    fn disc_border_is_a_curve() {
        let r = 40.0;
        let disc = BinaryMask::from_fn(101, 101, |x, y| {
            (x as f64 - 50.0).powi(2) + (y as f64 - 50.0).powi(2) <= r * r
        });
        let d = box_counting_dimension(&border(&disc));
        assert!((0.85..=1.15).contains(&d), "{d}");
    }

    #[test]
    fn empty_and_point_sets() {
        assert_eq!(box_counting_dimension(&BinaryMask::new(8, 8)), 0.0);
        let mut p = BinaryMask::new(8, 8);
        p.set(3, 3, true);
        assert!(box_counting_dimension(&p).abs() < 1e-12);
    }

    #[test]
    fn filled_plane_has_dimension_two() {
        let full = BinaryMask::from_fn(64, 64, |_, _| true);
        assert!((box_counting_dimension(&full) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_patch_is_degenerate() {
        let g = GrayImage::new(4, 4, vec![3; 16]).unwrap();
        let m = BinaryMask::from_fn(4, 4, |_, _| true);
        assert!(matches!(sfta_features(&g, &m), Err(Error::DegenerateTexture(_))));
    }
}
