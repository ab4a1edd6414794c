use std::io::Cursor;

use image::{DynamicImage, ImageFormat};

use super::PipelineError;
use crate::codec::{Patch, CHANNELS};

/// Interleaved 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageTensor {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl ImageTensor {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, PipelineError> {
        if width == 0 || height == 0 || pixels.len() != width * height * CHANNELS {
            return Err(PipelineError::InvalidImage(format!(
                "{width}x{height} image needs {} bytes, got {}",
                width * height * CHANNELS,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height * CHANNELS],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Patch grid dimensions `(rows, cols)` for side `p`.
    pub fn patch_grid(&self, p: usize) -> Result<(usize, usize), PipelineError> {
        if p == 0 || !self.width.is_multiple_of(p) || !self.height.is_multiple_of(p) {
            return Err(PipelineError::InvalidImage(format!(
                "{}x{} is not divisible into {p}x{p} patches",
                self.width, self.height
            )));
        }
        Ok((self.height / p, self.width / p))
    }

    /// Copies the patch at grid position `(row, col)` into channel-major order.
    pub fn patch(&self, p: usize, row: usize, col: usize) -> Patch {
        let mut px = vec![0u8; CHANNELS * p * p];
        for y in 0..p {
            for x in 0..p {
                let src = ((row * p + y) * self.width + col * p + x) * CHANNELS;
                for c in 0..CHANNELS {
                    px[c * p * p + y * p + x] = self.pixels[src + c];
                }
            }
        }
        Patch::new(p, px).expect("patch geometry is consistent")
    }

    pub fn put_patch(&mut self, row: usize, col: usize, patch: &Patch) {
        let p = patch.side();
        let px = patch.pixels();
        for y in 0..p {
            for x in 0..p {
                let dst = ((row * p + y) * self.width + col * p + x) * CHANNELS;
                for c in 0..CHANNELS {
                    self.pixels[dst + c] = px[c * p * p + y * p + x];
                }
            }
        }
    }

    /// Reads a binary PPM (P6, maxval 255).
    pub fn from_ppm(bytes: &[u8]) -> Result<Self, PipelineError> {
        if !bytes.starts_with(b"P6") {
            return Err(PipelineError::InvalidImage("not a binary PPM (P6)".into()));
        }
        let img = image::load(Cursor::new(bytes), ImageFormat::Pnm)
            .map_err(|e| PipelineError::InvalidImage(e.to_string()))?;
        let rgb = match img {
            DynamicImage::ImageRgb8(rgb) => rgb,
            other => {
                return Err(PipelineError::InvalidImage(format!(
                    "unsupported PPM sample type {:?}, need maxval 255",
                    other.color()
                )))
            }
        };
        let (w, h) = rgb.dimensions();
        Self::new(w as usize, h as usize, rgb.into_raw())
    }

    /// Writes a binary PPM with a minimal `P6\n<w> <h>\n255\n` header.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_and_comments() {
        let img = ImageTensor::new(2, 1, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let bytes = img.to_ppm();
        assert_eq!(&bytes[..11], b"P6\n2 1\n255\n");
        assert_eq!(ImageTensor::from_ppm(&bytes).unwrap(), img);
        let commented = b"P6\n# made by hand\n2 1\n255\n\x01\x02\x03\x04\x05\x06";
        assert_eq!(ImageTensor::from_ppm(commented).unwrap(), img);
    }

    #[test]
    fn ppm_rejects_other_formats() {
        assert!(ImageTensor::from_ppm(b"P3\n1 1\n255\n1 2 3\n").is_err());
        assert!(ImageTensor::from_ppm(b"P6\n2 2\n255\n\x00").is_err());
        assert!(ImageTensor::from_ppm(b"garbage").is_err());
    }

    #[test]
    fn patches_round_trip() {
        let px: Vec<u8> = (0..16 * 8 * 3).map(|i| (i % 251) as u8).collect();
        let img = ImageTensor::new(16, 8, px).unwrap();
        assert_eq!(img.patch_grid(8).unwrap(), (1, 2));
        assert!(img.patch_grid(3).is_err());
        let mut out = ImageTensor::filled(16, 8, 0);
        for c in 0..2 {
            out.put_patch(0, c, &img.patch(8, 0, c));
        }
        assert_eq!(out, img);
        // first pixel of patch (0,1) is image pixel (x=8, y=0)
        assert_eq!(img.patch(8, 0, 1).channel(0)[0], img.pixels()[8 * 3]);
    }
}
