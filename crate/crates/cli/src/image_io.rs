//! Raster input and output for PNG and PGM/PPM files.

use std::path::Path;

use cssa::{Plane, RgbImage};
use image::{DynamicImage, GrayImage, RgbImage as RgbBuffer};

use crate::error::{CliError, Result};

/// A decoded raster, normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Image {
    Gray(Plane),
    Rgb(RgbImage),
}

impl Image {
    pub fn dim(&self) -> (usize, usize) {
        match self {
            Self::Gray(p) => p.dim(),
            Self::Rgb(c) => c.dim(),
        }
    }

    /// The plane itself for grayscale files, the luma channel for colour ones.
    pub fn luma(&self) -> Plane {
        match self {
            Self::Gray(p) => p.clone(),
            Self::Rgb(c) => cssa::fusion::luma(c),
        }
    }
}

fn image_error(path: &Path, source: image::ImageError) -> CliError {
    CliError::Image {
        path: path.to_path_buf(),
        source,
    }
}

fn unsupported(path: &Path, what: &str) -> CliError {
    CliError::Image {
        path: path.to_path_buf(),
        source: image::ImageError::Unsupported(image::error::UnsupportedError::from_format_and_kind(
            image::error::ImageFormatHint::PathExtension(path.to_path_buf()),
            image::error::UnsupportedErrorKind::GenericFeature(what.to_string()),
        )),
    }
}

fn gray_plane<T: Copy + Into<f64>>(w: u32, h: u32, raw: &[T], stride: usize, scale: f64) -> Plane {
    Plane::from_shape_fn((h as usize, w as usize), |(i, j)| {
        raw[(i * w as usize + j) * stride].into() / scale
    })
}

fn rgb_planes<T: Copy + Into<f64>>(w: u32, h: u32, raw: &[T], stride: usize, scale: f64) -> RgbImage {
    let channel = |c: usize| {
        Plane::from_shape_fn((h as usize, w as usize), |(i, j)| {
            raw[(i * w as usize + j) * stride + c].into() / scale
        })
    };
    RgbImage::new(channel(0), channel(1), channel(2)).expect("channels share one shape")
}

/// Reads an 8- or 16-bit grayscale or RGB file; alpha channels are dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let img = image::ImageReader::open(path)
        .map_err(|e| CliError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| CliError::io(path, e))?
        .decode()
        .map_err(|e| image_error(path, e))?;
    let (w, h) = (img.width(), img.height());
    Ok(match &img {
        DynamicImage::ImageLuma8(b) => Image::Gray(gray_plane(w, h, b.as_raw(), 1, 255.0)),
        DynamicImage::ImageLumaA8(b) => Image::Gray(gray_plane(w, h, b.as_raw(), 2, 255.0)),
        DynamicImage::ImageLuma16(b) => Image::Gray(gray_plane(w, h, b.as_raw(), 1, 65535.0)),
        DynamicImage::ImageLumaA16(b) => Image::Gray(gray_plane(w, h, b.as_raw(), 2, 65535.0)),
        DynamicImage::ImageRgb8(b) => Image::Rgb(rgb_planes(w, h, b.as_raw(), 3, 255.0)),
        DynamicImage::ImageRgba8(b) => Image::Rgb(rgb_planes(w, h, b.as_raw(), 4, 255.0)),
        DynamicImage::ImageRgb16(b) => Image::Rgb(rgb_planes(w, h, b.as_raw(), 3, 65535.0)),
        DynamicImage::ImageRgba16(b) => Image::Rgb(rgb_planes(w, h, b.as_raw(), 4, 65535.0)),
        _ => return Err(unsupported(path, "floating-point rasters")),
    })
}

/// Loads a file and returns its luma plane.
pub fn load_luma(path: impl AsRef<Path>) -> Result<Plane> {
    Ok(load_image(path)?.luma())
}

// f64::round breaks ties away from zero
fn level(scaled: f64) -> u8 {
    scaled.clamp(0.0, 255.0).round() as u8
}

fn quantize(v: f64) -> u8 {
    level(v * 255.0)
}

/// Writes an 8-bit file; the format follows the extension.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (h, w) = img.dim();
    let result = match img {
        Image::Gray(p) => {
            let buf = GrayImage::from_fn(w as u32, h as u32, |x, y| image::Luma([quantize(p[[y as usize, x as usize]])]));
            buf.save(path)
        }
        Image::Rgb(c) => {
            let buf = RgbBuffer::from_fn(w as u32, h as u32, |x, y| {
                let (i, j) = (y as usize, x as usize);
                image::Rgb([quantize(c.red()[[i, j]]), quantize(c.green()[[i, j]]), quantize(c.blue()[[i, j]])])
            });
            buf.save(path)
        }
    };
    result.map_err(|e| image_error(path, e))
}
