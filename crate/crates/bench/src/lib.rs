//! Deterministic inputs shared by the benchmarks.

use histoctx::imgcore::{Magnification, RasterImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Blocky H&E-like image with per-pixel noise.
pub fn textured_image(width: usize, height: usize, seed: u64) -> RasterImage {
    let palette = [[200u8, 140, 190], [235, 175, 205], [175, 115, 170], [245, 242, 245]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = 97;
    let cols = width.div_ceil(block);
    let cells: Vec<usize> = (0..cols * height.div_ceil(block)).map(|_| rng.random_range(0..4)).collect();
    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let base = palette[cells[(y / block) * cols + x / block]];
            for c in base {
                data.push((c as i32 + rng.random_range(-12..=12)).clamp(0, 255) as u8);
            }
        }
    }
    RasterImage::new(width, height, data, Magnification::x1_25()).expect("consistent buffer")
}

/// Two noisy Gaussian-like clusters per class in `dim` dimensions.
pub fn labelled_points(n: usize, dim: usize, classes: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        x.push((0..dim).map(|d| (c * (d + 1) % 5) as f64 + rng.random_range(-1.5..1.5)).collect());
        y.push(c);
    }
    (x, y)
}
