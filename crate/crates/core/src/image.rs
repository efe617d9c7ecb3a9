use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::floor;

/// Row-major interleaved image, `data[(y * width + x) * channels + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::SizeMismatch {
                expected: width * height * channels,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut img = Self::new(width, height, channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    img.data[(y * width + x) * channels + c] = f(x, y, c);
                }
            }
        }
        img
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        let i = self.index(x, y, c);
        self.data[i] = value;
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = self.index(x, y, 0);
        &self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn check_same_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    /// Bilinear sample with pixel centres at integer coordinates. Coordinates
    /// outside the image are clamped to the border.
    pub fn sample_bilinear(&self, u: f64, v: f64, out: &mut [f64]) {
        let (x0, x1, fx) = bilinear_axis(u, self.width);
        let (y0, y1, fy) = bilinear_axis(v, self.height);
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            let top = self.get(x0, y0, c) * (1.0 - fx) + self.get(x1, y0, c) * fx;
            let bottom = self.get(x0, y1, c) * (1.0 - fx) + self.get(x1, y1, c) * fx;
            *o = top * (1.0 - fy) + bottom * fy;
        }
    }

    pub fn sample_rgb(&self, u: f64, v: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        self.sample_bilinear(u, v, &mut out);
        out
    }

    /// Rounds every value to the nearest multiple of 1/255 after clamping to [0,1].
    pub fn quantize_8bit(&mut self) {
        for v in &mut self.data {
            *v = floor(v.clamp(0.0, 1.0) * 255.0 + 0.5) / 255.0;
        }
    }

    /// Multiplies every channel by a single-channel mask of the same size.
    pub fn masked(&self, mask: &Image) -> Result<Image> {
        if mask.width != self.width || mask.height != self.height || mask.channels != 1 {
            return Err(Error::ShapeMismatch(format!(
                "mask {}x{}x{} for image {}x{}",
                mask.width, mask.height, mask.channels, self.width, self.height
            )));
        }
        let mut out = self.clone();
        for (i, m) in mask.data.iter().enumerate() {
            for c in 0..self.channels {
                out.data[i * self.channels + c] *= m;
            }
        }
        Ok(out)
    }
}

/// Lower index, upper index and fractional weight along one axis.
pub(crate) fn bilinear_axis(t: f64, len: usize) -> (usize, usize, f64) {
    let max = (len - 1) as f64;
    let t = t.clamp(0.0, max);
    let i0 = floor(t);
    let frac = t - i0;
    let i0 = i0 as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, frac)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_midpoint_and_corners() {
        let img = Image::from_fn(2, 2, 1, |x, y, _| (x + 2 * y) as f64);
        let mut o = [0.0];
        img.sample_bilinear(0.5, 0.0, &mut o);
        assert_eq!(o[0], 0.5);
        img.sample_bilinear(1.0, 1.0, &mut o);
        assert_eq!(o[0], 3.0);
        img.sample_bilinear(0.5, 0.5, &mut o);
        assert_eq!(o[0], 1.5);
        img.sample_bilinear(-3.0, 7.0, &mut o);
        assert_eq!(o[0], 2.0);
    }

    #[test]
    fn quantize_rounds_to_byte_levels() {
        let mut img = Image::from_data(1, 1, 3, vec![0.5, 1.2, -0.1]).unwrap();
        img.quantize_8bit();
        assert_eq!(img.data, vec![128.0 / 255.0, 1.0, 0.0]);
    }
}
