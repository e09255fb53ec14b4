//! Canny edge detection: Sobel gradients, non-maximum suppression, double
//! threshold, and hysteresis tracking.

use super::{expect_gray, ImagingError};
use crate::raster::{Channels, Raster};

/// Detects edges in a grayscale raster, returning a binary (0/255) map.
///
/// The four classic stages, with no built-in smoothing (blur separately if
/// needed):
///
/// 1. 3x3 Sobel gradients; the gradient magnitude is saturated at 255 so both
///    thresholds live on the 0-255 scale. Border pixels get zero gradient.
/// 2. Non-maximum suppression along the gradient direction quantized to
///    0/45/90/135 degrees. Ties are kept, so an ideal step edge may survive
///    as a two-pixel band.
/// 3. Double threshold: strong if magnitude > `high`, weak if > `low`
///    (both strict, so `low = high = 255` can never fire).
/// 4. Hysteresis: weak pixels are kept only when 8-connected to a strong
///    pixel, directly or through other weak pixels.
///
/// Requires `low <= high`.
pub fn canny_edges(img: &Raster, low: u8, high: u8) -> Result<Raster, ImagingError> {
    expect_gray(img)?;
    if low > high {
        return Err(ImagingError::InvalidParameter(format!(
            "canny thresholds must satisfy low <= high, got low={low} high={high}"
        )));
    }
    let (w, h) = (img.width() as usize, img.height() as usize);
    let at = |x: usize, y: usize| f64::from(img.gray(x as u32, y as u32));

    // Stage 1: Sobel gradients, magnitude saturated to 255.
    let mut mag = vec![0.0f64; w * h];
    let mut dir = vec![0.0f64; w * h];
    if w >= 3 && h >= 3 {
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let gx = -at(x - 1, y - 1) + at(x + 1, y - 1) - 2.0 * at(x - 1, y)
                    + 2.0 * at(x + 1, y)
                    - at(x - 1, y + 1)
                    + at(x + 1, y + 1);
                let gy = -at(x - 1, y - 1) - 2.0 * at(x, y - 1) - at(x + 1, y - 1)
                    + at(x - 1, y + 1)
                    + 2.0 * at(x, y + 1)
                    + at(x + 1, y + 1);
                mag[y * w + x] = gx.hypot(gy).min(255.0);
                dir[y * w + x] = gy.atan2(gx);
            }
        }
    }

    // Stage 2: non-maximum suppression (border ring stays suppressed).
    let mut thin = vec![0.0f64; w * h];
    if w >= 3 && h >= 3 {
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let m = mag[y * w + x];
                if m == 0.0 {
                    continue;
                }
                let mut angle = dir[y * w + x].to_degrees();
                if angle < 0.0 {
                    angle += 180.0;
                }
                let (dx, dy) = if !(22.5..157.5).contains(&angle) {
                    (1i64, 0i64) // gradient along x
                } else if angle < 67.5 {
                    (1, 1)
                } else if angle < 112.5 {
                    (0, 1)
                } else {
                    (1, -1)
                };
                let n1 = mag[(y as i64 + dy) as usize * w + (x as i64 + dx) as usize];
                let n2 = mag[(y as i64 - dy) as usize * w + (x as i64 - dx) as usize];
                if m >= n1 && m >= n2 {
                    thin[y * w + x] = m;
                }
            }
        }
    }

    // Stage 3 + 4: double threshold, then grow strong edges through weak
    // pixels over the 8-neighborhood.
    let low = f64::from(low);
    let high = f64::from(high);
    let mut out = vec![0u8; w * h];
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if thin[y * w + x] > high {
                out[y * w + x] = 255;
                stack.push((x, y));
            }
        }
    }
    while let Some((x, y)) = stack.pop() {
        for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
            for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                let i = ny * w + nx;
                if out[i] == 0 && thin[i] > low {
                    out[i] = 255;
                    stack.push((nx, ny));
                }
            }
        }
    }

    Ok(Raster::from_vec(img.width(), img.height(), Channels::Gray, out).expect("same pixel count"))
}
