use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ImageEncoder, RgbImage};

use super::ColorError;

/// RGB image with `f64` channels in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self, ColorError> {
        if pixels.len() != width * height {
            return Err(ColorError::InvalidImage(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels
            .iter()
            .flatten()
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            return Err(ColorError::InvalidImage(format!(
                "channel value {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image from a per-pixel function; values are clamped.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y).map(|v| v.clamp(0.0, 1.0)));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Self {
        Self::from_fn(width, height, |_, _| color)
    }

    pub(crate) fn from_raw_clamped(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Self {
        debug_assert_eq!(pixels.len(), width * height);
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    /// One color plane, row-major.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.pixels.iter().map(|p| p[c]).collect()
    }

    /// Photographic negative.
    pub fn negative(&self) -> Image {
        Image::from_raw_clamped(
            self.width,
            self.height,
            self.pixels.iter().map(|p| p.map(|v| 1.0 - v)).collect(),
        )
    }

    pub(crate) fn check_same_dims(&self, other: &Image) -> Result<(), ColorError> {
        if self.dims() != other.dims() {
            return Err(ColorError::DimensionMismatch {
                left: self.dims(),
                right: other.dims(),
            });
        }
        Ok(())
    }

    /// Loads a PNG or PNM file, mapping 8-bit values to `[0, 1]`.
    pub fn load(path: &Path) -> Result<Image, ColorError> {
        let img = image::open(path)
            .map_err(|e| ColorError::Io(format!("{}: {e}", path.display())))?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let pixels = img
            .pixels()
            .map(|p| p.0.map(|v| f64::from(v) / 255.0))
            .collect();
        Ok(Image::from_raw_clamped(w, h, pixels))
    }

    fn to_rgb8(&self) -> RgbImage {
        let mut out = RgbImage::new(self.width as u32, self.height as u32);
        for (dst, src) in out.pixels_mut().zip(&self.pixels) {
            dst.0 = src.map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8);
        }
        out
    }

    /// Saves as 8-bit PNG.
    pub fn save_png(&self, path: &Path) -> Result<(), ColorError> {
        self.to_rgb8()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| ColorError::Io(format!("{}: {e}", path.display())))
    }

    /// Saves as plain-text (P3) PPM.
    pub fn save_ppm_ascii(&self, path: &Path) -> Result<(), ColorError> {
        let file = std::fs::File::create(path)
            .map_err(|e| ColorError::Io(format!("{}: {e}", path.display())))?;
        let rgb = self.to_rgb8();
        PnmEncoder::new(std::io::BufWriter::new(file))
            .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Ascii))
            .write_image(
                rgb.as_raw(),
                rgb.width(),
                rgb.height(),
                image::ExtendedColorType::Rgb8,
            )
            .map_err(|e| ColorError::Io(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_and_bad_size() {
        assert!(Image::new(1, 1, vec![[1.5, 0.0, 0.0]]).is_err());
        assert!(Image::new(2, 1, vec![[0.0; 3]]).is_err());
        assert!(Image::new(1, 1, vec![[f64::NAN, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn png_and_ppm_round_trip_at_8_bits() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(5, 4, |x, y| [x as f64 / 4.0, y as f64 / 3.0, 0.2]);
        for name in ["a.png", "a.ppm"] {
            let p = dir.path().join(name);
            if name.ends_with("png") {
                img.save_png(&p).unwrap();
            } else {
                img.save_ppm_ascii(&p).unwrap();
                let text = std::fs::read_to_string(&p).unwrap();
                assert!(text.starts_with("P3"));
            }
            let back = Image::load(&p).unwrap();
            assert_eq!(back.dims(), (5, 4));
            for (a, b) in back.pixels().iter().zip(img.pixels()) {
                for c in 0..3 {
                    assert!((a[c] - b[c]).abs() <= 0.5 / 255.0 + 1e-12);
                }
            }
        }
    }
}
