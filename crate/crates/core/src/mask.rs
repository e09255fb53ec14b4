//! Perturbation masks: deriving the admissible patch region from a sign
//! image, enumerating placements on it, and shrinking it around an anchor.

use crate::imaging::{
    canny_edges, fill_contour, gaussian_blur, largest_contour, morph_close, morph_erode,
    to_grayscale, ImagingError,
};
use crate::raster::{Channels, Raster};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by mask derivation and mask geometry.
#[derive(Debug, Error)]
pub enum MaskError {
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("patch {patch_w}x{patch_h} does not fit inside the {mask_w}x{mask_h} mask")]
    PatchTooLarge {
        patch_w: u32,
        patch_h: u32,
        mask_w: u32,
        mask_h: u32,
    },
    #[error("bit buffer length {got} does not match {width}x{height}")]
    BufferMismatch { width: u32, height: u32, got: usize },
}

/// Parameters of the mask-derivation pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskParams {
    /// Gaussian kernel size (odd), applied before edge detection.
    pub blur_kernel: u32,
    /// Gaussian sigma.
    pub blur_sigma: f64,
    /// Lower hysteresis threshold (0-255).
    pub canny_low: u8,
    /// Upper hysteresis threshold (0-255).
    pub canny_high: u8,
    /// Radius of the square closing element (side `2 * radius + 1`).
    pub close_radius: u32,
}

impl Default for MaskParams {
    fn default() -> Self {
        Self {
            blur_kernel: 5,
            blur_sigma: 1.4,
            canny_low: 50,
            canny_high: 150,
            close_radius: 2,
        }
    }
}

/// A boolean pixel grid marking where patches may be centered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, MaskError> {
        if width == 0 || height == 0 || bits.len() != width as usize * height as usize {
            return Err(MaskError::BufferMismatch {
                width,
                height,
                got: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// A mask with every bit set to `value`.
    #[must_use]
    pub fn filled(width: u32, height: u32, value: bool) -> Self {
        Self::new(width, height, vec![value; width as usize * height as usize])
            .expect("dimensions must be non-zero")
    }

    /// Interprets a binary (0/255) grayscale raster as a mask.
    pub fn from_raster(img: &Raster) -> Result<Self, MaskError> {
        crate::imaging::expect_binary(img).map_err(MaskError::Imaging)?;
        let bits = img.data().iter().map(|&v| v == 255).collect();
        Self::new(img.width(), img.height(), bits)
    }

    /// Renders the mask as a 0/255 grayscale raster (the PNG interchange
    /// format for masks).
    #[must_use]
    pub fn to_raster(&self) -> Raster {
        let data = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        Raster::from_vec(self.width, self.height, Channels::Gray, data)
            .expect("same dimensions")
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
    pub fn get(&self, x: u32, y: u32) -> bool {
        assert!(x < self.width && y < self.height, "mask index out of bounds");
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        assert!(x < self.width && y < self.height, "mask index out of bounds");
        self.bits[y as usize * self.width as usize + x as usize] = value;
    }

    /// Number of true bits.
    #[must_use]
    pub fn valid_area(&self) -> u64 {
        self.bits.iter().map(|&b| u64::from(b)).sum()
    }

    /// Rounded mean coordinate of the true bits, if any.
    #[must_use]
    pub fn centroid(&self) -> Option<(u32, u32)> {
        let (mut sx, mut sy, mut n) = (0u64, 0u64, 0u64);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sx += u64::from(x);
                    sy += u64::from(y);
                    n += 1;
                }
            }
        }
        if n == 0 {
            return None;
        }
        let cx = (sx as f64 / n as f64).round() as u32;
        let cy = (sy as f64 / n as f64).round() as u32;
        Some((cx, cy))
    }
}

/// Derives the perturbation mask for a sign photo: grayscale, Gaussian blur,
/// Canny edges, morphological closing, then the largest contour filled into
/// a binary region the same size as the input. The filled region is finally
/// eroded by `close_radius`: the fill extends to the outer rim of the closed
/// edge band, which sits about that far outside the true silhouette, and the
/// erosion re-centers the boundary on it.
///
/// Errors bubble up from the stages; a featureless image fails with
/// "no foreground pixels to trace" once edge detection finds nothing.
pub fn generate_mask(sign: &Raster, params: &MaskParams) -> Result<BinaryMask, MaskError> {
    let gray = to_grayscale(sign)?;
    let blurred = gaussian_blur(&gray, params.blur_kernel, params.blur_sigma)?;
    let edges = canny_edges(&blurred, params.canny_low, params.canny_high)?;
    let closed = morph_close(&edges, params.close_radius)?;
    let contour = largest_contour(&closed)?;
    let filled = fill_contour(&contour, sign.width(), sign.height())?;
    let refined = morph_erode(&filled, params.close_radius)?;
    BinaryMask::from_raster(&refined)
}

/// Enumerates top-left positions, on a `stride`-spaced grid in row-major
/// order, where a `patch_w` x `patch_h` rectangle lies fully inside the mask
/// bounds and its center pixel `(x + patch_w / 2, y + patch_h / 2)` is a true
/// mask bit.
///
/// Errors when the patch exceeds the mask bounds or a parameter is zero.
pub fn valid_placements(
    mask: &BinaryMask,
    patch_w: u32,
    patch_h: u32,
    stride: u32,
) -> Result<Vec<(u32, u32)>, MaskError> {
    if patch_w == 0 || patch_h == 0 {
        return Err(MaskError::InvalidParameter(
            "patch dimensions must be at least 1x1".into(),
        ));
    }
    if stride == 0 {
        return Err(MaskError::InvalidParameter("stride must be >= 1".into()));
    }
    if patch_w > mask.width() || patch_h > mask.height() {
        return Err(MaskError::PatchTooLarge {
            patch_w,
            patch_h,
            mask_w: mask.width(),
            mask_h: mask.height(),
        });
    }
    let mut out = Vec::new();
    let mut y = 0;
    while y + patch_h <= mask.height() {
        let mut x = 0;
        while x + patch_w <= mask.width() {
            if mask.get(x + patch_w / 2, y + patch_h / 2) {
                out.push((x, y));
            }
            x += stride;
        }
        y += stride;
    }
    Ok(out)
}

/// Restricts `mask` to the smallest axis-aligned square window centered on
/// `center` (clamped to the image bounds) whose intersection with the mask
/// keeps at least `fraction` of the original valid area. The window side is
/// found by binary search; `fraction = 1.0` returns the mask unchanged.
///
/// `fraction` must lie in `(0, 1]` and `center` inside the mask bounds.
pub fn shrink_mask(
    mask: &BinaryMask,
    center: (u32, u32),
    fraction: f64,
) -> Result<BinaryMask, MaskError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(MaskError::InvalidParameter(format!(
            "shrink fraction must be in (0, 1], got {fraction}"
        )));
    }
    if center.0 >= mask.width() || center.1 >= mask.height() {
        return Err(MaskError::InvalidParameter(format!(
            "window center ({}, {}) outside {}x{} mask",
            center.0,
            center.1,
            mask.width(),
            mask.height()
        )));
    }
    let target = fraction * mask.valid_area() as f64 - 1e-9;

    // Summed-area table for O(1) window population counts.
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let mut sat = vec![0u64; (w + 1) * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            sat[(y + 1) * (w + 1) + (x + 1)] = u64::from(mask.get(x as u32, y as u32))
                + sat[y * (w + 1) + (x + 1)]
                + sat[(y + 1) * (w + 1) + x]
                - sat[y * (w + 1) + x];
        }
    }
    let window = |side: u32| -> (u32, u32, u32, u32) {
        let (cx, cy) = (i64::from(center.0), i64::from(center.1));
        let s = i64::from(side);
        let x0 = (cx - (s - 1) / 2).max(0) as u32;
        let y0 = (cy - (s - 1) / 2).max(0) as u32;
        let x1 = (cx + s / 2).min(mask.width() as i64 - 1) as u32;
        let y1 = (cy + s / 2).min(mask.height() as i64 - 1) as u32;
        (x0, y0, x1, y1)
    };
    let count = |side: u32| -> u64 {
        let (x0, y0, x1, y1) = window(side);
        let (x0, y0, x1, y1) = (x0 as usize, y0 as usize, x1 as usize + 1, y1 as usize + 1);
        sat[y1 * (w + 1) + x1] + sat[y0 * (w + 1) + x0]
            - sat[y0 * (w + 1) + x1]
            - sat[y1 * (w + 1) + x0]
    };

    // Smallest side whose window keeps `target` bits; the upper bound always
    // covers the whole image regardless of where the center sits.
    let (mut lo, mut hi) = (1u32, 2 * mask.width().max(mask.height()));
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if count(mid) as f64 >= target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }

    let (x0, y0, x1, y1) = window(lo);
    let mut bits = vec![false; w * h];
    for y in y0..=y1 {
        for x in x0..=x1 {
            bits[y as usize * w + x as usize] = mask.get(x, y);
        }
    }
    BinaryMask::new(mask.width(), mask.height(), bits)
}
