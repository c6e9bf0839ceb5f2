//! Pixel containers and the low-level image operations shared by the
//! region and cell stages.
//!
//! Coordinates use a top-left origin with `x` as the column and `y` as the
//! row, measured in pixels at the image's declared magnification.

mod color;
mod io;
mod morph;
mod threshold;
mod watershed;

pub use color::{
    lab_planes, lalphabeta_to_rgb, rgb_to_hsv, rgb_to_lab, rgb_to_lalphabeta, HsvPlanes,
    LabPlanes, LalphabetaPlanes,
};
#[cfg(test)]
pub(crate) use color::{lalphabeta_pixel, lms_to_rgb_matrix, rgb_from_lalphabeta};
pub use io::{load_rgb, save_gray, save_rgb};
pub use morph::{connected_components, dilate, erode, morph_open, Connectivity};
pub use threshold::{histogram, otsu_from_histogram, otsu_threshold};
pub use watershed::{distance_transform, watershed_split, DEFAULT_H_MIN};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pixel size at 20x, micrometres.
pub const PIXEL_SIZE_20X_UM: f64 = 0.504;
/// Linear scale factor between the cell level (20x) and the region level (1.25x).
pub const REGION_DOWNSCALE: u32 = 16;

/// Declared magnification of an image together with its physical pixel size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Magnification {
    pub tag: String,
    pub pixel_size_um: f64,
}

impl Magnification {
    pub fn new(tag: impl Into<String>, pixel_size_um: f64) -> Self {
        Magnification {
            tag: tag.into(),
            pixel_size_um,
        }
    }

    /// 20x, 0.504 µm per pixel.
    pub fn x20() -> Self {
        Magnification::new("20x", PIXEL_SIZE_20X_UM)
    }

    /// 1.25x, 8.064 µm per pixel.
    pub fn x1_25() -> Self {
        Magnification::new("1.25x", PIXEL_SIZE_20X_UM * f64::from(REGION_DOWNSCALE))
    }

    /// Magnification after shrinking by an integer factor.
    pub fn downscaled(&self, factor: u32) -> Self {
        let tag = match self.tag.strip_suffix('x').and_then(|m| m.parse::<f64>().ok()) {
            Some(m) => format!("{}x", m / f64::from(factor)),
            None => format!("{}/{}", self.tag, factor),
        };
        Magnification {
            tag,
            pixel_size_um: self.pixel_size_um * f64::from(factor),
        }
    }
}

/// 8-bit RGB image, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
    pub magnification: Magnification,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>, magnification: Magnification) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(Error::InvalidArgument(format!(
                "expected {} RGB samples, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(RasterImage {
            width,
            height,
            data,
            magnification,
        })
    }

    /// Image filled with a single color.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3], magnification: Magnification) -> Result<Self> {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        RasterImage::new(width, height, data, magnification)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        magnification: Magnification,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        RasterImage::new(width, height, data, magnification)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn pixel_at(&self, idx: usize) -> [u8; 3] {
        let i = idx * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// One channel (0 = R, 1 = G, 2 = B) as a gray image.
    pub fn channel(&self, c: usize) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().skip(c).step_by(3).copied().collect(),
        }
    }

    /// Copy of the rectangle `[x0, x0+w) × [y0, y0+h)`, clipped to the image.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<RasterImage> {
        let x1 = (x0 + w).min(self.width);
        let y1 = (y0 + h).min(self.height);
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::InvalidArgument(format!(
                "crop ({x0},{y0}) {w}x{h} lies outside {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity((x1 - x0) * (y1 - y0) * 3);
        for y in y0..y1 {
            let row = (y * self.width + x0) * 3;
            data.extend_from_slice(&self.data[row..row + (x1 - x0) * 3]);
        }
        RasterImage::new(x1 - x0, y1 - y0, data, self.magnification.clone())
    }
}

/// Scalar 8-bit intensity image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "gray image {width}x{height} with {} samples",
                data.len()
            )));
        }
        Ok(GrayImage { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage::new(width, height, data)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Intensity inversion, `255 - v`.
    pub fn inverted(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| 255 - v).collect(),
        }
    }
}

/// Binary mask; `true` is foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        BinaryMask { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// Pixels above `t` are foreground.
    pub fn threshold_above(gray: &GrayImage, t: u8) -> BinaryMask {
        BinaryMask {
            width: gray.width,
            height: gray.height,
            data: gray.data.iter().map(|&v| v > t).collect(),
        }
    }
}

/// Per-pixel segment identifiers.
///
/// For superpixels every label in `0..num_labels` is used. For watershed
/// output label 0 is background and nuclei are `1..num_labels`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub num_labels: usize,
}

impl LabelMap {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Raw little-endian bytes, used for determinism checks.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.labels.iter().flat_map(|l| l.to_le_bytes()).collect()
    }

    /// Pixel indices of each label, in raster order.
    pub fn members(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.num_labels];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i as u32);
        }
        out
    }
}

/// ITU-R 601 luminance, rounded.
pub fn to_gray(img: &RasterImage) -> GrayImage {
    let data = img
        .pixels()
        .map(|[r, g, b]| luminance(r, g, b))
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

#[inline]
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    y.round().clamp(0.0, 255.0) as u8
}

/// Area-average downsampling by an integer factor.
///
/// Each output pixel is the rounded (half up) mean of its source block;
/// partial blocks at the right and bottom edges average the pixels present.
pub fn downscale_box(img: &RasterImage, factor: i64) -> Result<RasterImage> {
    if factor <= 0 {
        return Err(Error::InvalidFactor(factor));
    }
    let f = factor as usize;
    let ow = img.width.div_ceil(f);
    let oh = img.height.div_ceil(f);
    let mut data = Vec::with_capacity(ow * oh * 3);
    let mut sums = vec![[0u64; 3]; ow];
    for by in 0..oh {
        sums.iter_mut().for_each(|s| *s = [0; 3]);
        let y1 = ((by + 1) * f).min(img.height);
        for y in by * f..y1 {
            let row = &img.data[y * img.width * 3..(y + 1) * img.width * 3];
            for (x, px) in row.chunks_exact(3).enumerate() {
                let s = &mut sums[x / f];
                s[0] += u64::from(px[0]);
                s[1] += u64::from(px[1]);
                s[2] += u64::from(px[2]);
            }
        }
        let bh = (y1 - by * f) as u64;
        for (bx, s) in sums.iter().enumerate() {
            let bw = (((bx + 1) * f).min(img.width) - bx * f) as u64;
            let n = bw * bh;
            for c in s {
                data.push(((c + n / 2) / n) as u8);
            }
        }
    }
    RasterImage::new(ow, oh, data, img.magnification.downscaled(f as u32))
}
