//! Gray-level co-occurrence matrices and Haralick features f1–f12.

use crate::error::{Error, Result};
use crate::imgcore::{BinaryMask, GrayImage};

/// Default number of quantized gray levels.
pub const GLCM_LEVELS: usize = 32;

/// Offsets for 0°, 45°, 90° and 135° at distance 1 (y grows downwards).
pub const DIRECTIONS: [(isize, isize); 4] = [(1, 0), (1, -1), (0, -1), (-1, -1)];

pub const HARALICK_NAMES: [&str; 12] = [
    "angular_second_moment",
    "contrast",
    "correlation",
    "sum_of_squares_variance",
    "inverse_difference_moment",
    "sum_average",
    "sum_variance",
    "sum_entropy",
    "entropy",
    "difference_variance",
    "difference_entropy",
    "information_measure_of_correlation_1",
];

/// Symmetric, normalized co-occurrence matrix over masked pixel pairs.
/// Returns `None` when no pair with both pixels inside the mask exists.
pub fn glcm(gray: &GrayImage, mask: &BinaryMask, offset: (isize, isize), levels: usize) -> Option<Vec<f64>> {
    let (w, h) = (gray.width as isize, gray.height as isize);
    let mut counts = vec![0u64; levels * levels];
    let mut total = 0u64;
    let q = |v: u8| usize::from(v) * levels / 256;
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x as usize, y as usize) {
                continue;
            }
            let (nx, ny) = (x + offset.0, y + offset.1);
            if nx < 0 || ny < 0 || nx >= w || ny >= h || !mask.get(nx as usize, ny as usize) {
                continue;
            }
            let a = q(gray.get(x as usize, y as usize));
            let b = q(gray.get(nx as usize, ny as usize));
            counts[a * levels + b] += 1;
            counts[b * levels + a] += 1;
            total += 2;
        }
    }
    (total > 0).then(|| counts.iter().map(|&c| c as f64 / total as f64).collect())
}

#[inline]
fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Haralick f1–f12 of one normalized `levels × levels` matrix, with gray
/// levels indexed from 1.
pub fn features_from_glcm(p: &[f64], levels: usize) -> [f64; 12] {
    let ng = levels;
    let mut px = vec![0.0; ng];
    let mut py = vec![0.0; ng];
    let mut p_sum = vec![0.0; 2 * ng + 1];
    let mut p_diff = vec![0.0; ng];
    let mut asm = 0.0;
    let mut idm = 0.0;
    let mut entropy = 0.0;
    let mut sum_ij = 0.0;
    for i in 0..ng {
        for j in 0..ng {
            let v = p[i * ng + j];
            if v == 0.0 {
                continue;
            }
            px[i] += v;
            py[j] += v;
            p_sum[i + j + 2] += v;
            p_diff[i.abs_diff(j)] += v;
            asm += v * v;
            let d = i as f64 - j as f64;
            idm += v / (1.0 + d * d);
            entropy -= plogp(v);
            sum_ij += ((i + 1) * (j + 1)) as f64 * v;
        }
    }
    let level = |i: usize| (i + 1) as f64;
    let mu_x: f64 = (0..ng).map(|i| level(i) * px[i]).sum();
    let mu_y: f64 = (0..ng).map(|j| level(j) * py[j]).sum();
    let var_x: f64 = (0..ng).map(|i| (level(i) - mu_x).powi(2) * px[i]).sum();
    let var_y: f64 = (0..ng).map(|j| (level(j) - mu_y).powi(2) * py[j]).sum();
    let sd = (var_x * var_y).sqrt();
    let single_level = |m: &[f64]| m.iter().filter(|&&v| v > 0.0).count() <= 1;
    let correlation = if !single_level(&px) && !single_level(&py) && sd > 0.0 {
        ((sum_ij - mu_x * mu_y) / sd).clamp(-1.0, 1.0)
    } else {
        1.0
    };
    let contrast: f64 = (0..ng).map(|n| (n * n) as f64 * p_diff[n]).sum();
    let sum_average: f64 = (2..=2 * ng).map(|k| k as f64 * p_sum[k]).sum();
    let sum_variance: f64 = (2..=2 * ng).map(|k| (k as f64 - sum_average).powi(2) * p_sum[k]).sum();
    let sum_entropy: f64 = -(2..=2 * ng).map(|k| plogp(p_sum[k])).sum::<f64>();
    let diff_mean: f64 = (0..ng).map(|n| n as f64 * p_diff[n]).sum();
    let diff_variance: f64 = (0..ng).map(|n| (n as f64 - diff_mean).powi(2) * p_diff[n]).sum();
    let diff_entropy: f64 = -p_diff.iter().map(|&v| plogp(v)).sum::<f64>();
    let hx: f64 = -px.iter().map(|&v| plogp(v)).sum::<f64>();
    let hy: f64 = -py.iter().map(|&v| plogp(v)).sum::<f64>();
    let mut hxy1 = 0.0;
    for i in 0..ng {
        for j in 0..ng {
            let v = p[i * ng + j];
            if v > 0.0 {
                hxy1 -= v * (px[i] * py[j]).ln();
            }
        }
    }
    let hmax = hx.max(hy);
    let imc1 = if hmax > 0.0 { (entropy - hxy1) / hmax } else { 0.0 };
    [
        asm,
        contrast,
        correlation,
        var_x,
        idm,
        sum_average,
        sum_variance,
        sum_entropy,
        entropy,
        diff_variance,
        diff_entropy,
        imc1,
    ]
}

/// The 12 Haralick features averaged over the four directions.
///
/// Gray values are quantized to `levels` bins; only pairs with both pixels
/// inside the mask contribute. Directions without pairs are skipped.
pub fn haralick_features_with_levels(gray: &GrayImage, mask: &BinaryMask, levels: usize) -> Result<[f64; 12]> {
    let mut acc = [0.0; 12];
    let mut used = 0usize;
    for &off in &DIRECTIONS {
        if let Some(p) = glcm(gray, mask, off, levels) {
            let f = features_from_glcm(&p, levels);
            acc.iter_mut().zip(f).for_each(|(a, v)| *a += v);
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::DegenerateTexture("no co-occurring masked pixel pairs"));
    }
    acc.iter_mut().for_each(|a| *a /= used as f64);
    Ok(acc)
}

pub fn haralick_features(gray: &GrayImage, mask: &BinaryMask) -> Result<[f64; 12]> {
    haralick_features_with_levels(gray, mask, GLCM_LEVELS)
}
