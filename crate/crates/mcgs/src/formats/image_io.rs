use std::path::Path;

use image::{ImageBuffer, Luma, Rgb, RgbImage};
use mcgs_core::Image;

use crate::error::{CliError, CliResult};

fn image_err(path: &Path, e: image::ImageError) -> CliError {
    match e {
        image::ImageError::IoError(io) => CliError::io(path, io),
        other => CliError::parse(path, other.to_string()),
    }
}

/// 8-bit RGB PNG to `[0, 1]` floats.
pub fn read_png(path: &Path) -> CliResult<Image> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(|b| b as f64 / 255.0).collect();
    Ok(Image::from_data(w, h, 3, data)?)
}

pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_png(path: &Path, img: &Image) -> CliResult<()> {
    let raw: Vec<u8> = (0..img.width * img.height)
        .flat_map(|p| {
            let px = &img.data[p * img.channels..(p + 1) * img.channels];
            [0, 1, 2].map(|c| to_u8(px[c.min(img.channels - 1)]))
        })
        .collect();
    let buf: RgbImage =
        ImageBuffer::<Rgb<u8>, _>::from_raw(img.width as u32, img.height as u32, raw).expect("buffer sized");
    buf.save(path).map_err(|e| image_err(path, e))
}

/// Single-channel image scaled by `1/max` into 16 bits.
pub fn write_png16(path: &Path, img: &Image) -> CliResult<f64> {
    let max = img.data.iter().cloned().fold(0.0, f64::max);
    let scale = if max > 0.0 { 65535.0 / max } else { 0.0 };
    let raw: Vec<u16> = img.data.iter().map(|v| (v * scale).round().clamp(0.0, 65535.0) as u16).collect();
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(img.width as u32, img.height as u32, raw).expect("buffer sized");
    buf.save(path).map_err(|e| image_err(path, e))?;
    Ok(max)
}

/// Binary mask from any PNG: pixels brighter than half are inside.
pub fn read_mask(path: &Path) -> CliResult<Image> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(|b| if b >= 128 { 1.0 } else { 0.0 }).collect();
    Ok(Image::from_data(w, h, 1, data)?)
}
