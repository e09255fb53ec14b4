//! Alpha-over compositing of a patch onto a sign image.

use super::ImagingError;
use crate::raster::{Channels, Raster};

/// Composites an RGBA `patch` over an RGB `base` with its top-left corner at
/// `(x, y)`, returning a new raster (the base is never mutated).
///
/// Per channel: `out = round(alpha * patch + (1 - alpha) * base)` with
/// `alpha = a / 255`, so fully transparent pixels leave the base bytes
/// untouched and fully opaque pixels copy the patch bytes.
///
/// Errors when the patch rectangle does not fit entirely inside the base.
pub fn composite(base: &Raster, patch: &Raster, x: u32, y: u32) -> Result<Raster, ImagingError> {
    if base.channels() != Channels::Rgb {
        return Err(ImagingError::ChannelMismatch {
            expected: "RGB",
            got: base.channels(),
        });
    }
    if patch.channels() != Channels::Rgba {
        return Err(ImagingError::ChannelMismatch {
            expected: "RGBA",
            got: patch.channels(),
        });
    }
    let fits = u64::from(x) + u64::from(patch.width()) <= u64::from(base.width())
        && u64::from(y) + u64::from(patch.height()) <= u64::from(base.height());
    if !fits {
        return Err(ImagingError::OutOfBounds {
            x,
            y,
            patch_w: patch.width(),
            patch_h: patch.height(),
            base_w: base.width(),
            base_h: base.height(),
        });
    }

    let mut out = base.clone();
    for py in 0..patch.height() {
        for px in 0..patch.width() {
            let p = patch.pixel(px, py);
            let a = f64::from(p[3]) / 255.0;
            if p[3] == 0 {
                continue;
            }
            let (bx, by) = (x + px, y + py);
            let b = out.pixel(bx, by);
            let blended = [
                (a * f64::from(p[0]) + (1.0 - a) * f64::from(b[0])).round() as u8,
                (a * f64::from(p[1]) + (1.0 - a) * f64::from(b[1])).round() as u8,
                (a * f64::from(p[2]) + (1.0 - a) * f64::from(b[2])).round() as u8,
            ];
            out.set_pixel(bx, by, &blended);
        }
    }
    Ok(out)
}
