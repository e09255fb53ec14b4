//! Image-processing primitives: the mask-derivation stages (grayscale, blur,
//! edge detection, morphology, contour tracing, polygon fill) and the patch
//! geometry operations (scale/rotate, alpha compositing) used by the search.
//!
//! All operations take and return [`Raster`](crate::raster::Raster) values;
//! none of them mutate their inputs.

mod blur;
mod canny;
mod composite;
mod contour;
mod grayscale;
mod morphology;
mod transform;

pub use blur::gaussian_blur;
pub use canny::canny_edges;
pub use composite::composite;
pub use contour::{fill_contour, largest_contour, Contour};
pub use grayscale::to_grayscale;
pub use morphology::{morph_close, morph_erode};
pub use transform::{resize_bilinear, transform_patch};

use crate::raster::Channels;
use thiserror::Error;

/// Errors raised by imaging operations.
#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("expected a {expected} raster, got {got:?}")]
    ChannelMismatch {
        expected: &'static str,
        got: Channels,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("expected a binary (0/255) raster, found value {value} at ({x}, {y})")]
    NonBinaryInput { x: u32, y: u32, value: u8 },
    #[error("no foreground pixels to trace")]
    NoForeground,
    #[error("contour is {reason}")]
    InvalidContour { reason: &'static str },
    #[error(
        "patch of {patch_w}x{patch_h} at ({x}, {y}) exceeds base bounds {base_w}x{base_h}"
    )]
    OutOfBounds {
        x: u32,
        y: u32,
        patch_w: u32,
        patch_h: u32,
        base_w: u32,
        base_h: u32,
    },
}

/// Checks that `img` is grayscale with only 0/255 values.
pub(crate) fn expect_binary(img: &crate::raster::Raster) -> Result<(), ImagingError> {
    expect_gray(img)?;
    for y in 0..img.height() {
        for x in 0..img.width() {
            let v = img.gray(x, y);
            if v != 0 && v != 255 {
                return Err(ImagingError::NonBinaryInput { x, y, value: v });
            }
        }
    }
    Ok(())
}

pub(crate) fn expect_gray(img: &crate::raster::Raster) -> Result<(), ImagingError> {
    if img.channels() != Channels::Gray {
        return Err(ImagingError::ChannelMismatch {
            expected: "grayscale",
            got: img.channels(),
        });
    }
    Ok(())
}
