//! RGB to grayscale conversion (BT.601 luma weights).

use super::ImagingError;
use crate::raster::{Channels, Raster};

/// Converts an RGB raster to grayscale using the BT.601 weights
/// `y = 0.299 r + 0.587 g + 0.114 b`, rounded to the nearest integer.
///
/// Errors with a channel mismatch for anything but a 3-channel input.
pub fn to_grayscale(img: &Raster) -> Result<Raster, ImagingError> {
    if img.channels() != Channels::Rgb {
        return Err(ImagingError::ChannelMismatch {
            expected: "RGB",
            got: img.channels(),
        });
    }
    let data = img
        .data()
        .chunks_exact(3)
        .map(|px| {
            let y = 0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2]);
            y.round() as u8
        })
        .collect();
    Ok(Raster::from_vec(img.width(), img.height(), Channels::Gray, data)
        .expect("same pixel count"))
}
