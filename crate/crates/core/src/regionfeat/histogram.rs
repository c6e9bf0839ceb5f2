use super::RegionPlanes;

pub const HISTOGRAM_NAMES: [&str; 7] = [
    "mean_hue",
    "mean_saturation",
    "mean_value",
    "sum_intensity",
    "intensity_range",
    "intensity_sd",
    "intensity_entropy_bits",
];

/// Color and intensity statistics over the given pixel indices: mean hue
/// (degrees), mean saturation, mean value, sum of gray, max − min of gray,
/// population SD of gray and Shannon entropy (bits) of the 256-bin gray
/// histogram.
pub fn histogram_features(pixels: &[u32], planes: &RegionPlanes) -> [f64; 7] {
    let n = pixels.len() as f64;
    let mut hue = 0.0;
    let mut sat = 0.0;
    let mut val = 0.0;
    let mut sum = 0u64;
    let mut min = u8::MAX;
    let mut max = u8::MIN;
    let mut hist = [0u64; 256];
    for &p in pixels {
        let p = p as usize;
        hue += planes.hsv.hue[p];
        sat += planes.hsv.saturation[p];
        val += planes.hsv.value[p];
        let g = planes.gray.data[p];
        sum += u64::from(g);
        min = min.min(g);
        max = max.max(g);
        hist[g as usize] += 1;
    }
    let mean = sum as f64 / n;
    let var = pixels
        .iter()
        .map(|&p| (f64::from(planes.gray.data[p as usize]) - mean).powi(2))
        .sum::<f64>()
        / n;
    let entropy = -hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let q = c as f64 / n;
            q * q.log2()
        })
        .sum::<f64>();
    [
        hue / n,
        sat / n,
        val / n,
        sum as f64,
        f64::from(max - min),
        var.sqrt(),
        entropy,
    ]
}
