//! Morphological closing and erosion on binary rasters.

use super::{expect_binary, ImagingError};
use crate::raster::{Channels, Raster};

/// Morphological closing (dilation followed by erosion) with a square
/// structuring element of side `2 * radius + 1`.
///
/// The dilation is computed on a canvas padded by `radius` so that the
/// erosion sees the full dilated set; this makes the operation exactly the
/// ideal closing restricted to the image window, which is extensive
/// (`close(x) ⊇ x`) and idempotent. `radius = 0` is the identity.
///
/// The input must be binary (0/255).
pub fn morph_close(img: &Raster, radius: u32) -> Result<Raster, ImagingError> {
    expect_binary(img)?;
    if radius == 0 {
        return Ok(img.clone());
    }
    let r = radius as usize;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (cw, ch) = (w + 2 * r, h + 2 * r);

    let mut canvas = vec![false; cw * ch];
    for y in 0..h {
        for x in 0..w {
            canvas[(y + r) * cw + (x + r)] = img.gray(x as u32, y as u32) == 255;
        }
    }

    let dilated = square_filter(&canvas, cw, ch, r, /* dilate */ true, false);
    let closed = square_filter(&dilated, cw, ch, r, /* dilate */ false, false);

    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            if closed[(y + r) * cw + (x + r)] {
                out[y * w + x] = 255;
            }
        }
    }
    Ok(Raster::from_vec(img.width(), img.height(), Channels::Gray, out).expect("same pixel count"))
}

/// Erosion with a square structuring element of side `2 * radius + 1`.
///
/// Pixels outside the image count as foreground, so a region touching the
/// border is eroded only along its interior boundary and a fully set image
/// is a fixed point. `radius = 0` is the identity.
///
/// The input must be binary (0/255).
pub fn morph_erode(img: &Raster, radius: u32) -> Result<Raster, ImagingError> {
    expect_binary(img)?;
    if radius == 0 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut bits = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            bits[y * w + x] = img.gray(x as u32, y as u32) == 255;
        }
    }
    let eroded = square_filter(&bits, w, h, radius as usize, /* dilate */ false, true);
    let out = eroded.iter().map(|&b| if b { 255 } else { 0 }).collect();
    Ok(Raster::from_vec(img.width(), img.height(), Channels::Gray, out).expect("same pixel count"))
}

/// Separable max (dilate) / min (erode) filter with a square window of
/// half-width `r`; out-of-canvas samples count as `oob`.
fn square_filter(bits: &[bool], w: usize, h: usize, r: usize, dilate: bool, oob: bool) -> Vec<bool> {
    let pass = |src: &[bool], horizontal: bool| -> Vec<bool> {
        let mut dst = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = !dilate;
                for d in -(r as i64)..=(r as i64) {
                    let (sx, sy) = if horizontal {
                        (x as i64 + d, y as i64)
                    } else {
                        (x as i64, y as i64 + d)
                    };
                    let v = if sx < 0 || sy < 0 || sx >= w as i64 || sy >= h as i64 {
                        oob
                    } else {
                        src[sy as usize * w + sx as usize]
                    };
                    if dilate {
                        acc |= v;
                    } else {
                        acc &= v;
                    }
                }
                dst[y * w + x] = acc;
            }
        }
        dst
    };
    let mid = pass(bits, true);
    pass(&mid, false)
}
