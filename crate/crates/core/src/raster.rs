//! 8-bit raster images and PNG serialization.
//!
//! [`Raster`] is the pixel container every other module operates on: a dense
//! row-major `u8` buffer with 1 (grayscale), 3 (RGB) or 4 (RGBA) channels.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ExtendedColorType, ImageEncoder};
use thiserror::Error;

/// Channel layout of a [`Raster`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channels {
    Gray,
    Rgb,
    Rgba,
}

impl Channels {
    /// Number of bytes per pixel.
    #[must_use]
    pub fn count(self) -> usize {
        match self {
            Channels::Gray => 1,
            Channels::Rgb => 3,
            Channels::Rgba => 4,
        }
    }
}

/// Errors raised when constructing or (de)serializing rasters.
#[derive(Debug, Error)]
pub enum RasterError {
    #[error("raster dimensions must be at least 1x1, got {width}x{height}")]
    ZeroDimension { width: u32, height: u32 },
    #[error("pixel buffer length {got} does not match {width}x{height}x{channels}={expected}")]
    BufferMismatch {
        width: u32,
        height: u32,
        channels: usize,
        expected: usize,
        got: usize,
    },
    #[error("failed to decode PNG: {0}")]
    Decode(String),
    #[error("failed to encode PNG: {0}")]
    Encode(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Dense 8-bit image, row-major, interleaved channels.
#[derive(Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    channels: Channels,
    data: Vec<u8>,
}

impl std::fmt::Debug for Raster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Raster")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl Raster {
    /// Wraps an existing pixel buffer. The buffer length must be exactly
    /// `width * height * channels.count()` and both dimensions must be >= 1.
    pub fn from_vec(
        width: u32,
        height: u32,
        channels: Channels,
        data: Vec<u8>,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::ZeroDimension { width, height });
        }
        let expected = width as usize * height as usize * channels.count();
        if data.len() != expected {
            return Err(RasterError::BufferMismatch {
                width,
                height,
                channels: channels.count(),
                expected,
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

    /// A raster with every channel of every pixel set to `value`.
    ///
    /// # Panics
    /// Panics if either dimension is zero.
    #[must_use]
    pub fn filled(width: u32, height: u32, channels: Channels, value: u8) -> Self {
        let len = width as usize * height as usize * channels.count();
        Self::from_vec(width, height, channels, vec![value; len])
            .expect("filled: dimensions must be non-zero")
    }

    /// A raster with every pixel set to `pixel`, which must have exactly one
    /// value per channel.
    pub fn filled_pixel(
        width: u32,
        height: u32,
        channels: Channels,
        pixel: &[u8],
    ) -> Result<Self, RasterError> {
        if pixel.len() != channels.count() {
            // The fill pixel is a 1x1 buffer in the requested layout.
            return Err(RasterError::BufferMismatch {
                width: 1,
                height: 1,
                channels: channels.count(),
                expected: channels.count(),
                got: pixel.len(),
            });
        }
        let count = width as usize * height as usize;
        let mut data = Vec::with_capacity(count * pixel.len());
        for _ in 0..count {
            data.extend_from_slice(pixel);
        }
        Self::from_vec(width, height, channels, data)
    }

    #[must_use]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[must_use]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[must_use]
    pub fn channels(&self) -> Channels {
        self.channels
    }

    #[must_use]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[must_use]
    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[must_use]
    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels.count()
    }

    /// Channel slice of the pixel at `(x, y)`.
    ///
    /// # Panics
    /// Panics if the coordinate is out of bounds.
    #[must_use]
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        assert!(x < self.width && y < self.height, "pixel out of bounds");
        let o = self.offset(x, y);
        &self.data[o..o + self.channels.count()]
    }

    /// Overwrites the pixel at `(x, y)`.
    ///
    /// # Panics
    /// Panics if out of bounds or if `px` has the wrong channel count.
    pub fn set_pixel(&mut self, x: u32, y: u32, px: &[u8]) {
        assert!(x < self.width && y < self.height, "pixel out of bounds");
        assert_eq!(px.len(), self.channels.count(), "channel count mismatch");
        let o = self.offset(x, y);
        self.data[o..o + px.len()].copy_from_slice(px);
    }

    /// Single-channel accessor for grayscale rasters.
    ///
    /// # Panics
    /// Panics if out of bounds (callers use it on `Gray` rasters only).
    #[must_use]
    pub fn gray(&self, x: u32, y: u32) -> u8 {
        self.pixel(x, y)[0]
    }

    /// Converts to RGB: grayscale is replicated, an alpha channel is dropped.
    #[must_use]
    pub fn to_rgb(&self) -> Raster {
        match self.channels {
            Channels::Rgb => self.clone(),
            Channels::Gray => {
                let mut out = Vec::with_capacity(self.data.len() * 3);
                for &v in &self.data {
                    out.extend_from_slice(&[v, v, v]);
                }
                Raster::from_vec(self.width, self.height, Channels::Rgb, out)
                    .expect("same dimensions")
            }
            Channels::Rgba => {
                let mut out = Vec::with_capacity(self.width as usize * self.height as usize * 3);
                for px in self.data.chunks_exact(4) {
                    out.extend_from_slice(&px[..3]);
                }
                Raster::from_vec(self.width, self.height, Channels::Rgb, out)
                    .expect("same dimensions")
            }
        }
    }

    /// Converts to RGBA: missing alpha becomes 255 (fully opaque).
    #[must_use]
    pub fn to_rgba(&self) -> Raster {
        match self.channels {
            Channels::Rgba => self.clone(),
            Channels::Gray => {
                let mut out = Vec::with_capacity(self.data.len() * 4);
                for &v in &self.data {
                    out.extend_from_slice(&[v, v, v, 255]);
                }
                Raster::from_vec(self.width, self.height, Channels::Rgba, out)
                    .expect("same dimensions")
            }
            Channels::Rgb => {
                let mut out = Vec::with_capacity(self.width as usize * self.height as usize * 4);
                for px in self.data.chunks_exact(3) {
                    out.extend_from_slice(px);
                    out.push(255);
                }
                Raster::from_vec(self.width, self.height, Channels::Rgba, out)
                    .expect("same dimensions")
            }
        }
    }

    /// Decodes a PNG byte stream, preserving the source channel layout where
    /// it is one of L8/RGB8/RGBA8; other layouts are converted (alpha kept).
    pub fn decode_png(bytes: &[u8]) -> Result<Self, RasterError> {
        let dynamic = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| RasterError::Decode(e.to_string()))?;
        let (w, h) = (dynamic.width(), dynamic.height());
        let (channels, data) = match dynamic {
            DynamicImage::ImageLuma8(img) => (Channels::Gray, img.into_raw()),
            DynamicImage::ImageRgb8(img) => (Channels::Rgb, img.into_raw()),
            DynamicImage::ImageRgba8(img) => (Channels::Rgba, img.into_raw()),
            other if other.color().has_alpha() => (Channels::Rgba, other.to_rgba8().into_raw()),
            other => (Channels::Rgb, other.to_rgb8().into_raw()),
        };
        Self::from_vec(w, h, channels, data)
    }

    /// Encodes as PNG (L8, RGB8 or RGBA8 to match the channel layout).
    pub fn encode_png(&self) -> Result<Vec<u8>, RasterError> {
        let mut out = Vec::new();
        let encoder = image::codecs::png::PngEncoder::new(Cursor::new(&mut out));
        let color = match self.channels {
            Channels::Gray => ExtendedColorType::L8,
            Channels::Rgb => ExtendedColorType::Rgb8,
            Channels::Rgba => ExtendedColorType::Rgba8,
        };
        encoder
            .write_image(&self.data, self.width, self.height, color)
            .map_err(|e| RasterError::Encode(e.to_string()))?;
        Ok(out)
    }

    /// Reads and decodes a PNG file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RasterError> {
        let bytes = std::fs::read(path)?;
        Self::decode_png(&bytes)
    }

    /// Encodes as PNG and writes to `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_buffer_length() {
        let err = Raster::from_vec(3, 2, Channels::Rgb, vec![0; 17]).unwrap_err();
        assert!(matches!(err, RasterError::BufferMismatch { expected: 18, got: 17, .. }));
        assert!(Raster::from_vec(3, 2, Channels::Rgb, vec![0; 18]).is_ok());
    }

    #[test]
    fn from_vec_rejects_zero_dimension() {
        let err = Raster::from_vec(0, 4, Channels::Gray, vec![]).unwrap_err();
        assert!(matches!(err, RasterError::ZeroDimension { .. }));
    }

    #[test]
    fn pixel_roundtrip() {
        let mut img = Raster::filled(4, 3, Channels::Rgba, 0);
        img.set_pixel(2, 1, &[10, 20, 30, 40]);
        assert_eq!(img.pixel(2, 1), &[10, 20, 30, 40]);
        assert_eq!(img.pixel(0, 0), &[0, 0, 0, 0]);
    }

    #[test]
    fn png_roundtrip_preserves_gray_rgb_rgba() {
        for channels in [Channels::Gray, Channels::Rgb, Channels::Rgba] {
            let n = 5 * 4 * channels.count();
            let data: Vec<u8> = (0..n).map(|i| (i * 7 % 256) as u8).collect();
            let img = Raster::from_vec(5, 4, channels, data).unwrap();
            let png = img.encode_png().unwrap();
            let back = Raster::decode_png(&png).unwrap();
            assert_eq!(back.channels(), channels);
            assert_eq!(back.data(), img.data());
        }
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(matches!(
            Raster::decode_png(b"not a png"),
            Err(RasterError::Decode(_))
        ));
    }

    #[test]
    fn channel_conversions() {
        let gray = Raster::from_vec(2, 1, Channels::Gray, vec![9, 200]).unwrap();
        assert_eq!(gray.to_rgb().data(), &[9, 9, 9, 200, 200, 200]);
        assert_eq!(gray.to_rgba().pixel(1, 0), &[200, 200, 200, 255]);

        let rgba = Raster::from_vec(1, 1, Channels::Rgba, vec![1, 2, 3, 4]).unwrap();
        assert_eq!(rgba.to_rgb().data(), &[1, 2, 3]);
    }
}
