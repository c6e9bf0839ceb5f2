//! Color space conversions: HSV for histogram features, lαβ for stain
//! normalization and CIELAB for superpixel clustering.

use super::RasterImage;

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HsvPlanes {
    pub hue: Vec<f64>,
    pub saturation: Vec<f64>,
    pub value: Vec<f64>,
}

/// Hexcone HSV. Achromatic pixels have hue 0.
pub fn rgb_to_hsv(img: &RasterImage) -> HsvPlanes {
    let n = img.len();
    let mut out = HsvPlanes {
        hue: Vec::with_capacity(n),
        saturation: Vec::with_capacity(n),
        value: Vec::with_capacity(n),
    };
    for px in img.pixels() {
        let (h, s, v) = hsv_pixel(px);
        out.hue.push(h);
        out.saturation.push(s);
        out.value.push(v);
    }
    out
}

pub(crate) fn hsv_pixel([r, g, b]: [u8; 3]) -> (f64, f64, f64) {
    let (r, g, b) = (f64::from(r) / 255.0, f64::from(g) / 255.0, f64::from(b) / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    (h, s, v)
}

/// Decorrelated lαβ planes of the color-transfer construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LalphabetaPlanes {
    pub width: usize,
    pub height: usize,
    pub planes: [Vec<f64>; 3],
}

/// Floor applied to RGB in `(0, 1]` before the logarithm.
const LOG_EPS: f64 = 1e-4;

const RGB_TO_LMS: [[f64; 3]; 3] = [
    [0.3811, 0.5783, 0.0402],
    [0.1967, 0.7244, 0.0782],
    [0.0241, 0.1288, 0.8444],
];

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let det = m[0][0] * c(1, 2, 1, 2) - m[0][1] * c(1, 2, 0, 2) + m[0][2] * c(1, 2, 0, 1);
    [
        [c(1, 2, 1, 2) / det, -c(0, 2, 1, 2) / det, c(0, 1, 1, 2) / det],
        [-c(1, 2, 0, 2) / det, c(0, 2, 0, 2) / det, -c(0, 1, 0, 2) / det],
        [c(1, 2, 0, 1) / det, -c(0, 2, 0, 1) / det, c(0, 1, 0, 1) / det],
    ]
}

#[inline]
fn mul3(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// RGB (0–255) to lαβ for a single pixel.
pub(crate) fn lalphabeta_pixel(rgb: [u8; 3]) -> [f64; 3] {
    let v = rgb.map(|c| (f64::from(c) / 255.0).max(LOG_EPS));
    let lms = mul3(&RGB_TO_LMS, v).map(f64::log10);
    let (s3, s6, s2) = (3f64.sqrt(), 6f64.sqrt(), 2f64.sqrt());
    [
        (lms[0] + lms[1] + lms[2]) / s3,
        (lms[0] + lms[1] - 2.0 * lms[2]) / s6,
        (lms[0] - lms[1]) / s2,
    ]
}

/// lαβ triple back to RGB, clamped and rounded to 8 bits.
pub(crate) fn rgb_from_lalphabeta(lab: [f64; 3], lms_to_rgb: &[[f64; 3]; 3]) -> [u8; 3] {
    let (s3, s6, s2) = (3f64.sqrt(), 6f64.sqrt(), 2f64.sqrt());
    let (l, a, b) = (lab[0] / s3, lab[1] / s6, lab[2] / s2);
    let log_lms = [l + a + b, l + a - b, l - 2.0 * a];
    let lms = log_lms.map(|v| 10f64.powf(v));
    mul3(lms_to_rgb, lms).map(|c| (c * 255.0).round().clamp(0.0, 255.0) as u8)
}

pub(crate) fn lms_to_rgb_matrix() -> [[f64; 3]; 3] {
    invert3(&RGB_TO_LMS)
}

pub fn rgb_to_lalphabeta(img: &RasterImage) -> LalphabetaPlanes {
    let n = img.len();
    let mut planes = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    for px in img.pixels() {
        let v = lalphabeta_pixel(px);
        for c in 0..3 {
            planes[c].push(v[c]);
        }
    }
    LalphabetaPlanes {
        width: img.width(),
        height: img.height(),
        planes,
    }
}

/// Inverse of [`rgb_to_lalphabeta`]; output keeps the given magnification.
pub fn lalphabeta_to_rgb(planes: &LalphabetaPlanes, magnification: super::Magnification) -> RasterImage {
    let inv = lms_to_rgb_matrix();
    let n = planes.width * planes.height;
    let mut data = Vec::with_capacity(n * 3);
    for i in 0..n {
        let px = rgb_from_lalphabeta([planes.planes[0][i], planes.planes[1][i], planes.planes[2][i]], &inv);
        data.extend_from_slice(&px);
    }
    RasterImage::new(planes.width, planes.height, data, magnification)
        .expect("planes have consistent dimensions")
}

/// CIELAB planes (D65), single precision for clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct LabPlanes {
    pub width: usize,
    pub height: usize,
    pub l: Vec<f32>,
    pub a: Vec<f32>,
    pub b: Vec<f32>,
}

fn srgb_linear_lut() -> [f64; 256] {
    let mut lut = [0.0; 256];
    for (i, v) in lut.iter_mut().enumerate() {
        let c = i as f64 / 255.0;
        *v = if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        };
    }
    lut
}

#[inline]
fn lab_f(t: f64) -> f64 {
    const D: f64 = 6.0 / 29.0;
    if t > D * D * D {
        t.cbrt()
    } else {
        t / (3.0 * D * D) + 4.0 / 29.0
    }
}

fn lab_from_linear(lut: &[f64; 256], [r, g, b]: [u8; 3]) -> [f64; 3] {
    let (r, g, b) = (lut[r as usize], lut[g as usize], lut[b as usize]);
    let x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
    let (fx, fy, fz) = (lab_f(x), lab_f(y), lab_f(z));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// sRGB pixel to CIELAB.
pub fn rgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    lab_from_linear(&srgb_linear_lut(), rgb)
}

/// CIELAB planes of a whole image.
pub fn lab_planes(img: &RasterImage) -> LabPlanes {
    let lut = srgb_linear_lut();
    let n = img.len();
    let mut out = LabPlanes {
        width: img.width(),
        height: img.height(),
        l: Vec::with_capacity(n),
        a: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
    };
    // Histology images have few distinct colors relative to their size.
    let mut cache: std::collections::HashMap<[u8; 3], [f32; 3]> = std::collections::HashMap::new();
    for px in img.pixels() {
        let v = *cache
            .entry(px)
            .or_insert_with(|| lab_from_linear(&lut, px).map(|c| c as f32));
        out.l.push(v[0]);
        out.a.push(v[1]);
        out.b.push(v[2]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::Magnification;

    #[test]
    fn hsv_reference_values() {
        assert_eq!(hsv_pixel([255, 0, 0]), (0.0, 1.0, 1.0));
        let (h, s, v) = hsv_pixel([128, 128, 128]);
        assert_eq!((h, s), (0.0, 0.0));
        assert!((v - 0.502).abs() < 1e-3);
        // Blue is max: 60 * ((R - G) / delta + 4) with delta = 1.
        let (h, s, v) = hsv_pixel([0, 128, 255]);
        let expected = 60.0 * ((0.0 - 128.0 / 255.0) + 4.0);
        assert!((h - expected).abs() < 1e-12);
        assert!((h - 209.88).abs() < 0.01);
        assert_eq!((s, v), (1.0, 1.0));
    }

    #[test]
    fn lalphabeta_matches_matrix_chain() {
        // Literal evaluation of RGB -> LMS -> log10 -> lαβ for (200,100,50).
        let (r, g, b) = (200.0f64 / 255.0, 100.0f64 / 255.0, 50.0f64 / 255.0);
        let l = (0.3811 * r + 0.5783 * g + 0.0402 * b).log10();
        let m = (0.1967 * r + 0.7244 * g + 0.0782 * b).log10();
        let s = (0.0241 * r + 0.1288 * g + 0.8444 * b).log10();
        let expected = [
            (l + m + s) / 3f64.sqrt(),
            (l + m - 2.0 * s) / 6f64.sqrt(),
            (l - m) / 2f64.sqrt(),
        ];
        let got = lalphabeta_pixel([200, 100, 50]);
        for c in 0..3 {
            assert!((got[c] - expected[c]).abs() < 1e-12, "{got:?} vs {expected:?}");
        }
    }

    #[test]
    fn lalphabeta_constant_image() {
        let img = RasterImage::filled(4, 3, [90, 40, 160], Magnification::x1_25()).unwrap();
        let p = rgb_to_lalphabeta(&img);
        for plane in &p.planes {
            assert!(plane.iter().all(|&v| v == plane[0]));
        }
    }

    #[test]
    fn lalphabeta_round_trip_extremes() {
        let inv = lms_to_rgb_matrix();
        for px in [[0, 0, 0], [255, 255, 255], [255, 0, 0], [0, 255, 0], [0, 0, 255], [1, 2, 3]] {
            let back = rgb_from_lalphabeta(lalphabeta_pixel(px), &inv);
            for c in 0..3 {
                assert!((i16::from(back[c]) - i16::from(px[c])).abs() <= 1, "{px:?} -> {back:?}");
            }
        }
    }

    #[test]
    fn lab_reference_points() {
        let w = rgb_to_lab([255, 255, 255]);
        assert!((w[0] - 100.0).abs() < 1e-3 && w[1].abs() < 1e-2 && w[2].abs() < 1e-2);
        let k = rgb_to_lab([0, 0, 0]);
        assert!(k[0].abs() < 1e-9);
        // Standard sRGB red: L*≈53.24, a*≈80.09, b*≈67.20.
        let r = rgb_to_lab([255, 0, 0]);
        assert!((r[0] - 53.24).abs() < 0.05 && (r[1] - 80.09).abs() < 0.1 && (r[2] - 67.20).abs() < 0.1);
    }
}
