//! Patch scaling and rotation.

use super::ImagingError;
use crate::raster::{Channels, Raster};

/// Bilinear resize with pixel-center sampling (`sx = (ox + 0.5) * sw / ow -
/// 0.5`), clamping source coordinates at the borders. Works for any channel
/// layout; each channel is interpolated independently and rounded.
#[must_use]
pub fn resize_bilinear(img: &Raster, new_w: u32, new_h: u32) -> Raster {
    assert!(new_w >= 1 && new_h >= 1, "resize target must be at least 1x1");
    if new_w == img.width() && new_h == img.height() {
        return img.clone();
    }
    let ch = img.channels().count();
    let (sw, sh) = (img.width() as i64, img.height() as i64);
    let x_ratio = f64::from(img.width()) / f64::from(new_w);
    let y_ratio = f64::from(img.height()) / f64::from(new_h);
    let mut out = Vec::with_capacity(new_w as usize * new_h as usize * ch);
    for oy in 0..new_h {
        let sy = (f64::from(oy) + 0.5) * y_ratio - 0.5;
        let y0 = sy.floor() as i64;
        let ty = sy - y0 as f64;
        let (y0c, y1c) = (y0.clamp(0, sh - 1) as u32, (y0 + 1).clamp(0, sh - 1) as u32);
        for ox in 0..new_w {
            let sx = (f64::from(ox) + 0.5) * x_ratio - 0.5;
            let x0 = sx.floor() as i64;
            let tx = sx - x0 as f64;
            let (x0c, x1c) = (x0.clamp(0, sw - 1) as u32, (x0 + 1).clamp(0, sw - 1) as u32);
            let (p00, p10) = (img.pixel(x0c, y0c), img.pixel(x1c, y0c));
            let (p01, p11) = (img.pixel(x0c, y1c), img.pixel(x1c, y1c));
            for c in 0..ch {
                let top = f64::from(p00[c]) * (1.0 - tx) + f64::from(p10[c]) * tx;
                let bot = f64::from(p01[c]) * (1.0 - tx) + f64::from(p11[c]) * tx;
                out.push((top * (1.0 - ty) + bot * ty).round() as u8);
            }
        }
    }
    Raster::from_vec(new_w, new_h, img.channels(), out).expect("computed buffer size")
}

/// Scales an RGBA patch by `scale` (bilinear, dimensions rounded) and rotates
/// it by `angle` degrees about its center.
///
/// * `scale = 1, angle = 0` returns the patch byte-identically.
/// * Multiples of 90 degrees are exact pixel permutations; `angle = 90` maps
///   source `(x, y)` of a `W x H` patch to `(y, W - 1 - x)` of the `H x W`
///   result, and four successive 90-degree rotations compose to the identity.
/// * Other angles resample bilinearly into the tight bounding box of the
///   rotated extent, with fully transparent pixels outside the patch.
///
/// Errors when the patch is not RGBA, `scale` is not a positive finite
/// number, or the scaled size rounds below 1x1.
pub fn transform_patch(patch: &Raster, scale: f64, angle: f64) -> Result<Raster, ImagingError> {
    if patch.channels() != Channels::Rgba {
        return Err(ImagingError::ChannelMismatch {
            expected: "RGBA",
            got: patch.channels(),
        });
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(ImagingError::InvalidParameter(format!(
            "scale must be positive and finite, got {scale}"
        )));
    }
    if !angle.is_finite() {
        return Err(ImagingError::InvalidParameter(format!(
            "angle must be finite, got {angle}"
        )));
    }

    let sw = (f64::from(patch.width()) * scale).round() as i64;
    let sh = (f64::from(patch.height()) * scale).round() as i64;
    if sw < 1 || sh < 1 {
        return Err(ImagingError::InvalidParameter(format!(
            "scaled patch size {sw}x{sh} is below 1x1"
        )));
    }
    let scaled = resize_bilinear(patch, sw as u32, sh as u32);

    let angle = angle.rem_euclid(360.0);
    if angle == 0.0 {
        return Ok(scaled);
    }
    if angle == 90.0 || angle == 180.0 || angle == 270.0 {
        return Ok(rotate_exact(&scaled, angle as u32));
    }
    Ok(rotate_bilinear(&scaled, angle))
}

/// Exact rotation by 90, 180 or 270 degrees.
fn rotate_exact(img: &Raster, angle: u32) -> Raster {
    let (w, h) = (img.width(), img.height());
    let (ow, oh) = if angle == 180 { (w, h) } else { (h, w) };
    let mut out = Raster::filled(ow, oh, Channels::Rgba, 0);
    for y in 0..h {
        for x in 0..w {
            let px = img.pixel(x, y);
            let (nx, ny) = match angle {
                90 => (y, w - 1 - x),
                180 => (w - 1 - x, h - 1 - y),
                270 => (h - 1 - y, x),
                _ => unreachable!("caller screens angles"),
            };
            out.set_pixel(nx, ny, px);
        }
    }
    out
}

fn rotate_bilinear(img: &Raster, angle: f64) -> Raster {
    let rad = angle.to_radians();
    let (cos, sin) = (rad.cos(), rad.sin());
    let (w, h) = (f64::from(img.width()), f64::from(img.height()));
    let ow = ((w * cos.abs() + h * sin.abs()) - 1e-9).ceil().max(1.0) as u32;
    let oh = ((w * sin.abs() + h * cos.abs()) - 1e-9).ceil().max(1.0) as u32;
    let (cx_s, cy_s) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
    let (cx_d, cy_d) = ((f64::from(ow) - 1.0) / 2.0, (f64::from(oh) - 1.0) / 2.0);

    let sample = |x: i64, y: i64| -> [f64; 4] {
        if x < 0 || y < 0 || x >= i64::from(img.width()) || y >= i64::from(img.height()) {
            [0.0; 4] // transparent outside the patch
        } else {
            let p = img.pixel(x as u32, y as u32);
            [f64::from(p[0]), f64::from(p[1]), f64::from(p[2]), f64::from(p[3])]
        }
    };

    let mut out = Raster::filled(ow, oh, Channels::Rgba, 0);
    for v in 0..oh {
        for u in 0..ow {
            let (du, dv) = (f64::from(u) - cx_d, f64::from(v) - cy_d);
            // Inverse of the forward map (x, y) -> (x cos + y sin, -x sin + y cos).
            let sx = cos * du - sin * dv + cx_s;
            let sy = sin * du + cos * dv + cy_s;
            let (x0, y0) = (sx.floor() as i64, sy.floor() as i64);
            let (tx, ty) = (sx - x0 as f64, sy - y0 as f64);
            let mut acc = [0.0f64; 4];
            for (wgt, px) in [
                ((1.0 - tx) * (1.0 - ty), sample(x0, y0)),
                (tx * (1.0 - ty), sample(x0 + 1, y0)),
                ((1.0 - tx) * ty, sample(x0, y0 + 1)),
                (tx * ty, sample(x0 + 1, y0 + 1)),
            ] {
                for c in 0..4 {
                    acc[c] += wgt * px[c];
                }
            }
            out.set_pixel(u, v, &acc.map(|v| v.round() as u8));
        }
    }
    out
}
