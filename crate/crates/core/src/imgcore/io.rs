use std::path::Path;

use super::{GrayImage, Magnification, RasterImage};
use crate::error::{Error, Result};

/// Reads a PNG or TIFF tile as 8-bit RGB. Magnification comes from the caller.
pub fn load_rgb(path: &Path, magnification: Magnification) -> Result<RasterImage> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    RasterImage::new(w as usize, h as usize, rgb.into_raw(), magnification)
}

/// Writes an RGB image; format follows the file extension.
pub fn save_rgb(path: &Path, img: &RasterImage) -> Result<()> {
    image::save_buffer(
        path,
        img.data(),
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_gray(path: &Path, img: &GrayImage) -> Result<()> {
    image::save_buffer(
        path,
        &img.data,
        img.width as u32,
        img.height as u32,
        image::ExtendedColorType::L8,
    )
    .map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}
