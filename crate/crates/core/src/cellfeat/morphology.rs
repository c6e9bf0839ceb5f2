use std::f64::consts::{PI, SQRT_2};

use crate::cellseg::Nucleus;
use crate::imgcore::{luminance, BinaryMask, GrayImage, RasterImage};
use crate::regionfeat::{haralick_features, HARALICK_NAMES};

pub const MORPHOLOGY_LEN: usize = 91;

const GEOMETRY_NAMES: [&str; 23] = [
    "area",
    "perimeter",
    "circularity",
    "eccentricity",
    "major_axis",
    "minor_axis",
    "orientation",
    "solidity",
    "extent",
    "equivalent_diameter",
    "convex_area",
    "convex_perimeter",
    "radius_mean",
    "radius_sd",
    "radius_min",
    "radius_max",
    "bbox_width",
    "bbox_height",
    "axis_ratio",
    "roughness",
    "hu1",
    "hu2",
    "hu3",
];

const CHANNELS: [&str; 4] = ["red", "green", "blue", "gray"];

const INTENSITY_STATS: [&str; 14] = [
    "mean",
    "sd",
    "min",
    "max",
    "q25",
    "median",
    "q75",
    "iqr",
    "mad",
    "skewness",
    "kurtosis",
    "entropy",
    "boundary_mean",
    "interior_mean",
];

/// Names of the 91 morphological features in vector order.
pub fn morphology_names() -> Vec<String> {
    let mut names: Vec<String> = GEOMETRY_NAMES.iter().map(|s| s.to_string()).collect();
    for ch in CHANNELS {
        names.extend(INTENSITY_STATS.iter().map(|s| format!("{ch}_{s}")));
    }
    names.extend(HARALICK_NAMES.iter().map(|s| format!("nucleus_{s}")));
    names
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorphologyFeatures {
    pub values: Vec<f64>,
    /// Nuclear texture had no co-occurring pairs and was zero-filled.
    pub texture_degenerate: bool,
    /// The mask touches the tile border, so features describe the clipped mask.
    pub clipped: bool,
}

/// Geometry, per-channel intensity and texture descriptors of one nucleus.
pub fn morphology_features(nucleus: &Nucleus, tile: &RasterImage) -> MorphologyFeatures {
    let mask = nucleus.local_mask(tile.width());
    let (x0, y0, _, _) = nucleus.bbox;
    let border = border_mask(&mask);
    let mut values = geometry(&mask, &border).to_vec();

    let mut channels: [Vec<u8>; 4] = Default::default();
    let mut on_border = Vec::with_capacity(nucleus.area);
    for y in 0..mask.height {
        for x in 0..mask.width {
            if !mask.get(x, y) {
                continue;
            }
            let [r, g, b] = tile.pixel(x0 + x, y0 + y);
            channels[0].push(r);
            channels[1].push(g);
            channels[2].push(b);
            channels[3].push(luminance(r, g, b));
            on_border.push(border.get(x, y));
        }
    }
    for ch in &channels {
        values.extend(intensity_stats(ch, &on_border));
    }

    let gray = GrayImage::from_fn(mask.width, mask.height, |x, y| {
        let [r, g, b] = tile.pixel(x0 + x, y0 + y);
        luminance(r, g, b)
    })
    .expect("non-empty nucleus");
    let texture = haralick_features(&gray, &mask);
    values.extend(texture.as_ref().map_or([0.0; 12], |t| *t));
    debug_assert_eq!(values.len(), MORPHOLOGY_LEN);
    MorphologyFeatures {
        values,
        texture_degenerate: texture.is_err(),
        clipped: nucleus.touches_border,
    }
}

/// Mask pixels with a 4-neighbour outside the mask or the patch.
fn border_mask(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width as isize, mask.height as isize);
    BinaryMask::from_fn(mask.width, mask.height, |x, y| {
        mask.get(x, y)
            && [(0, -1), (-1, 0), (1, 0), (0, 1)].iter().any(|&(dx, dy)| {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                nx < 0 || ny < 0 || nx >= w || ny >= h || !mask.get(nx as usize, ny as usize)
            })
    })
}

// Clockwise in image coordinates (y down), starting east.
const MOORE: [(isize, isize); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

/// Length of the outer 8-connected contour through boundary pixel centres,
/// with unit axial and √2 diagonal steps.
fn traced_perimeter(mask: &BinaryMask) -> f64 {
    let (w, h) = (mask.width as isize, mask.height as isize);
    let fg = |x: isize, y: isize| x >= 0 && y >= 0 && x < w && y < h && mask.get(x as usize, y as usize);
    let Some(first) = mask.data.iter().position(|&b| b) else {
        return 0.0;
    };
    let start = ((first % mask.width) as isize, (first / mask.width) as isize);
    // The west neighbour of the first raster pixel is background.
    let (mut p, mut back) = (start, 4usize);
    let mut second = None;
    let mut length = 0.0;
    let limit = 8 * mask.width * mask.height + 8;
    for _ in 0..limit {
        let Some((d, next)) = (1..=8).map(|i| (back + i) % 8).find_map(|d| {
            let n = (p.0 + MOORE[d].0, p.1 + MOORE[d].1);
            fg(n.0, n.1).then_some((d, n))
        }) else {
            break;
        };
        if p == start {
            match second {
                Some(s) if s == next => break,
                None => second = Some(next),
                _ => {}
            }
        }
        let prev = (d + 7) % 8;
        let b = (p.0 + MOORE[prev].0, p.1 + MOORE[prev].1);
        length += if d % 2 == 0 { 1.0 } else { SQRT_2 };
        p = next;
        back = MOORE
            .iter()
            .position(|&(dx, dy)| (p.0 + dx, p.1 + dy) == b)
            .expect("backtrack is a neighbour");
    }
    length
}

/// Convex hull (counter-clockwise) of integer points.
fn convex_hull(mut pts: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (i64, i64), a: (i64, i64), b: (i64, i64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let half = |iter: &mut dyn Iterator<Item = (i64, i64)>| {
        let mut chain: Vec<(i64, i64)> = Vec::new();
        for p in iter {
            while chain.len() >= 2 && cross(chain[chain.len() - 2], chain[chain.len() - 1], p) <= 0 {
                chain.pop();
            }
            chain.push(p);
        }
        chain.pop();
        chain
    };
    let mut hull = half(&mut pts.iter().copied());
    hull.extend(half(&mut pts.iter().rev().copied()));
    hull
}

fn geometry(mask: &BinaryMask, border: &BinaryMask) -> [f64; 23] {
    let mut pts = Vec::new();
    let mut corners = Vec::new();
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(x, y) {
                pts.push((x as f64, y as f64));
                let (xi, yi) = (x as i64, y as i64);
                corners.extend([(xi, yi), (xi + 1, yi), (xi, yi + 1), (xi + 1, yi + 1)]);
            }
        }
    }
    let area = pts.len() as f64;
    let cx = pts.iter().map(|p| p.0).sum::<f64>() / area;
    let cy = pts.iter().map(|p| p.1).sum::<f64>() / area;
    let mu = |p: i32, q: i32| pts.iter().map(|&(x, y)| (x - cx).powi(p) * (y - cy).powi(q)).sum::<f64>();
    let (mu20, mu02, mu11) = (mu(2, 0), mu(0, 2), mu(1, 1));
    let (c20, c02, c11) = (mu20 / area, mu02 / area, mu11 / area);
    let disc = ((c20 - c02).powi(2) + 4.0 * c11 * c11).sqrt();
    let l1 = ((c20 + c02 + disc) / 2.0).max(0.0);
    let l2 = ((c20 + c02 - disc) / 2.0).max(0.0);
    let major = 4.0 * l1.sqrt();
    let minor = 4.0 * l2.sqrt();
    let eccentricity = if l1 > 0.0 { (1.0 - l2 / l1).max(0.0).sqrt() } else { 0.0 };
    let orientation = 0.5 * (2.0 * c11).atan2(c20 - c02);

    let perimeter = traced_perimeter(mask);
    let circularity = if perimeter > 0.0 { 4.0 * PI * area / (perimeter * perimeter) } else { 0.0 };

    let hull = convex_hull(corners);
    let mut twice_area = 0i64;
    let mut hull_perimeter = 0.0;
    for i in 0..hull.len() {
        let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
        twice_area += a.0 * b.1 - b.0 * a.1;
        hull_perimeter += (((b.0 - a.0).pow(2) + (b.1 - a.1).pow(2)) as f64).sqrt();
    }
    let convex_area = twice_area.abs() as f64 / 2.0;

    let radii: Vec<f64> = (0..mask.height)
        .flat_map(|y| (0..mask.width).map(move |x| (x, y)))
        .filter(|&(x, y)| border.get(x, y))
        .map(|(x, y)| (x as f64 - cx).hypot(y as f64 - cy))
        .collect();
    let rn = radii.len() as f64;
    let r_mean = radii.iter().sum::<f64>() / rn;
    let r_sd = (radii.iter().map(|r| (r - r_mean).powi(2)).sum::<f64>() / rn).sqrt();
    let r_min = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let r_max = radii.iter().copied().fold(0.0, f64::max);

    let eta = |p: i32, q: i32| mu(p, q) / area.powf(1.0 + f64::from(p + q) / 2.0);
    let (e20, e02, e11) = (eta(2, 0), eta(0, 2), eta(1, 1));
    let (e30, e03, e21, e12) = (eta(3, 0), eta(0, 3), eta(2, 1), eta(1, 2));

    [
        area,
        perimeter,
        circularity,
        eccentricity,
        major,
        minor,
        orientation,
        area / convex_area,
        area / (mask.width * mask.height) as f64,
        (4.0 * area / PI).sqrt(),
        convex_area,
        hull_perimeter,
        r_mean,
        r_sd,
        r_min,
        r_max,
        mask.width as f64,
        mask.height as f64,
        if major > 0.0 { minor / major } else { 1.0 },
        if hull_perimeter > 0.0 { perimeter / hull_perimeter } else { 0.0 },
        e20 + e02,
        (e20 - e02).powi(2) + 4.0 * e11 * e11,
        (e30 - 3.0 * e12).powi(2) + (3.0 * e21 - e03).powi(2),
    ]
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn intensity_stats(values: &[u8], on_border: &[bool]) -> [f64; 14] {
    let n = values.len() as f64;
    let mut sorted: Vec<f64> = values.iter().map(|&v| f64::from(v)).collect();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n;
    let m = |k: i32| sorted.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
    let (m2, m3, m4) = (m(2), m(3), m(4));
    let sd = m2.sqrt();
    let (skew, kurt) = if sd > 0.0 { (m3 / m2.powf(1.5), m4 / (m2 * m2)) } else { (0.0, 0.0) };
    let (q25, med, q75) = (quantile(&sorted, 0.25), quantile(&sorted, 0.5), quantile(&sorted, 0.75));
    let mut dev: Vec<f64> = sorted.iter().map(|v| (v - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let mut hist = [0u32; 256];
    for &v in values {
        hist[v as usize] += 1;
    }
    let entropy = -hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = f64::from(c) / n;
            p * p.log2()
        })
        .sum::<f64>();
    let mean_where = |flag: bool| {
        let (s, c) = values
            .iter()
            .zip(on_border)
            .filter(|(_, &b)| b == flag)
            .fold((0.0, 0usize), |(s, c), (&v, _)| (s + f64::from(v), c + 1));
        (c > 0).then(|| s / c as f64)
    };
    let boundary = mean_where(true).unwrap_or(mean);
    let interior = mean_where(false).unwrap_or(boundary);
    [
        mean,
        sd,
        sorted[0],
        sorted[sorted.len() - 1],
        q25,
        med,
        q75,
        q75 - q25,
        quantile(&dev, 0.5),
        skew,
        kurt,
        entropy,
        boundary,
        interior,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::Magnification;

    fn nucleus_from(mask: impl Fn(usize, usize) -> bool, w: usize, h: usize) -> Nucleus {
        let px: Vec<u32> = (0..w * h).filter(|&i| mask(i % w, i / w)).map(|i| i as u32).collect();
        Nucleus::from_pixels(0, px, w, h, "t")
    }

    fn disc_tile(r: f64, shift: (usize, usize)) -> (Nucleus, RasterImage) {
        let (w, h) = (60, 60);
        let (cx, cy) = (25.0 + shift.0 as f64, 25.0 + shift.1 as f64);
        let inside = move |x: usize, y: usize| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r;
        let tile = RasterImage::from_fn(w, h, Magnification::x20(), |x, y| {
            if inside(x, y) {
                [(80 + (x * 7 + y * 3) % 40) as u8, (50 + (x * y) % 30) as u8, 120]
            } else {
                [240, 230, 235]
            }
        })
        .unwrap();
        (nucleus_from(inside, w, h), tile)
    }

    #[test]
    fn names_count() {
        let n = morphology_names();
        assert_eq!(n.len(), MORPHOLOGY_LEN);
        let mut u = n.clone();
        u.sort();
        u.dedup();
        assert_eq!(u.len(), n.len());
    }

    #[test]
    fn disc_geometry() {
        let (n, tile) = disc_tile(10.0, (0, 0));
        let f = morphology_features(&n, &tile).values;
        // Gauss circle count for r = 10.
        let gauss = (-10i32..=10)
            .flat_map(|x| (-10i32..=10).map(move |y| (x, y)))
            .filter(|(x, y)| x * x + y * y <= 100)
            .count();
        assert_eq!(gauss, 317);
        assert_eq!(f[0], 317.0);
        assert!(f[2] >= 0.9, "circularity {}", f[2]);
        assert!(f[3] <= 0.1, "eccentricity {}", f[3]);
        assert!((f[4] - f[5]).abs() < 1e-9);
        assert!(f[7] > 0.9 && f[7] <= 1.0);
        assert_eq!(f[16], 21.0);
        assert!((f[9] - 2.0 * (317.0 / PI).sqrt()).abs() < 1e-12);
        assert!(f.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn square_perimeter_and_hull() {
        let n = nucleus_from(|x, y| (2..12).contains(&x) && (3..8).contains(&y), 20, 20);
        let tile = RasterImage::filled(20, 20, [100, 50, 120], Magnification::x20()).unwrap();
        let f = morphology_features(&n, &tile).values;
        // Contour through pixel centres of a 10 x 5 block.
        assert!((f[1] - 2.0 * (9.0 + 4.0)).abs() < 1e-12);
        assert_eq!(f[10], 50.0);
        assert_eq!(f[11], 30.0);
        assert_eq!(f[7], 1.0);
        assert_eq!(f[8], 1.0);
        assert_eq!(f[6], 0.0);
    }

    #[test]
    fn diagonal_line_perimeter() {
        let n = nucleus_from(|x, y| x == y && x < 5, 8, 8);
        let tile = RasterImage::filled(8, 8, [0, 0, 0], Magnification::x20()).unwrap();
        let f = morphology_features(&n, &tile).values;
        assert!((f[1] - 8.0 * SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn constant_nucleus_has_zero_spread() {
        let n = nucleus_from(|x, y| (x as f64 - 10.0).hypot(y as f64 - 10.0) <= 5.0, 24, 24);
        let tile = RasterImage::filled(24, 24, [90, 60, 130], Magnification::x20()).unwrap();
        let f = morphology_features(&n, &tile);
        for c in 0..4 {
            let base = 23 + 14 * c;
            assert_eq!(f.values[base + 1], 0.0);
            assert_eq!(f.values[base + 7], 0.0);
            assert_eq!(f.values[base + 8], 0.0);
            assert_eq!(f.values[base + 11], 0.0);
        }
        assert_eq!(f.values[23], 90.0);
        assert!(!f.texture_degenerate);
    }

    #[test]
    fn translation_invariant() {
        let (a, ta) = disc_tile(8.0, (0, 0));
        let (b, _) = disc_tile(8.0, (7, 7));
        // The texture must move with the mask.
        let tb = RasterImage::from_fn(60, 60, Magnification::x20(), |x, y| {
            if x >= 7 && y >= 7 {
                ta.pixel(x - 7, y - 7)
            } else {
                [240, 230, 235]
            }
        })
        .unwrap();
        let fa = morphology_features(&a, &ta).values;
        let fb = morphology_features(&b, &tb).values;
        for (i, (x, y)) in fa.iter().zip(&fb).enumerate() {
            assert!((x - y).abs() < 1e-9, "feature {i}: {x} vs {y}");
        }
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.5), 2.5);
        assert_eq!(quantile(&s, 0.25), 1.75);
    }

    #[test]
    fn single_pixel_is_finite() {
        let n = nucleus_from(|x, y| x == 3 && y == 3, 8, 8);
        let tile = RasterImage::filled(8, 8, [10, 20, 30], Magnification::x20()).unwrap();
        let f = morphology_features(&n, &tile);
        assert!(f.values.iter().all(|v| v.is_finite()));
        assert!(f.texture_degenerate);
        assert_eq!(f.values[1], 0.0);
    }
}
