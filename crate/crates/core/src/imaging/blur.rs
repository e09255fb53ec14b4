//! Separable Gaussian blur with edge-replicate padding.

use super::{expect_gray, ImagingError};
use crate::raster::{Channels, Raster};

/// Discretized, normalized 1-D Gaussian kernel of odd length `k`.
fn kernel_1d(k: u32, sigma: f64) -> Vec<f64> {
    let c = (k / 2) as f64;
    let mut w: Vec<f64> = (0..k)
        .map(|i| {
            let d = i as f64 - c;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Blurs a grayscale raster with a `kernel`-tap Gaussian of width `sigma`.
///
/// The kernel is discretized from the Gaussian density and normalized to sum
/// to 1, then applied separably (horizontal pass, vertical pass) with
/// edge-replicate padding. Intermediate values stay in floating point; the
/// result is rounded once at the end, so the output equals a direct 2-D
/// convolution with the product kernel.
///
/// `kernel` must be odd and >= 1 (a 1-tap kernel is the identity);
/// `sigma` must be positive and finite.
pub fn gaussian_blur(img: &Raster, kernel: u32, sigma: f64) -> Result<Raster, ImagingError> {
    expect_gray(img)?;
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(ImagingError::InvalidParameter(format!(
            "blur kernel must be odd and >= 1, got {kernel}"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(ImagingError::InvalidParameter(format!(
            "blur sigma must be positive and finite, got {sigma}"
        )));
    }
    let (w, h) = (img.width() as i64, img.height() as i64);
    let taps = kernel_1d(kernel, sigma);
    let r = (kernel / 2) as i64;

    // Horizontal pass into f64, clamping sample coordinates (edge replicate).
    let mut mid = vec![0.0f64; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, t) in taps.iter().enumerate() {
                let sx = (x + i as i64 - r).clamp(0, w - 1);
                acc += t * f64::from(img.gray(sx as u32, y as u32));
            }
            mid[(y * w + x) as usize] = acc;
        }
    }
    // Vertical pass, rounding to u8 once.
    let mut out = vec![0u8; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, t) in taps.iter().enumerate() {
                let sy = (y + i as i64 - r).clamp(0, h - 1);
                acc += t * mid[(sy * w + x) as usize];
            }
            out[(y * w + x) as usize] = acc.round() as u8;
        }
    }
    Ok(Raster::from_vec(img.width(), img.height(), Channels::Gray, out).expect("same pixel count"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_tap_kernel_is_identity() {
        let data: Vec<u8> = (0..30).map(|i| (i * 11 % 256) as u8).collect();
        let img = Raster::from_vec(6, 5, Channels::Gray, data).unwrap();
        let out = gaussian_blur(&img, 1, 1.4).unwrap();
        assert_eq!(out.data(), img.data());
    }

    #[test]
    fn constant_image_is_preserved() {
        let img = Raster::filled(9, 7, Channels::Gray, 200);
        let out = gaussian_blur(&img, 5, 1.4).unwrap();
        assert!(out.data().iter().all(|&v| v == 200));
    }

    // Impulse response for kernel 5, sigma 1.4, derived by evaluating the
    // normalized kernel directly: unnormalized taps exp(-d^2 / 3.92) are
    // [0.3604483, 0.7748374, 1, 0.7748374, 0.3604483] (sum 3.2705714), so the
    // normalized taps are [0.1102096, 0.2369119, 0.3057570, ...] and the 2-D
    // response at offset (i, j) is 255 * t_i * t_j.
    #[test]
    fn impulse_response_matches_direct_kernel_evaluation() {
        let mut img = Raster::filled(7, 7, Channels::Gray, 0);
        img.set_pixel(3, 3, &[255]);
        let out = gaussian_blur(&img, 5, 1.4).unwrap();

        let expected: [[u8; 5]; 5] = [
            [3, 7, 9, 7, 3],
            [7, 14, 18, 14, 7],
            [9, 18, 24, 18, 9],
            [7, 14, 18, 14, 7],
            [3, 7, 9, 7, 3],
        ];
        for (j, row) in expected.iter().enumerate() {
            for (i, &want) in row.iter().enumerate() {
                assert_eq!(
                    out.gray(i as u32 + 1, j as u32 + 1),
                    want,
                    "at offset ({i}, {j})"
                );
            }
        }
        // Outside the kernel support everything stays zero.
        for x in 0..7 {
            assert_eq!(out.gray(x, 0), 0);
            assert_eq!(out.gray(x, 6), 0);
        }
    }

    // Edge-replicate padding on a 3x1 strip [0, 0, 255] with kernel 3,
    // sigma 1: taps [0.2740416, 0.4519167, 0.2740416]. x=2 samples its
    // out-of-bounds right neighbor as 255: 255 * (t1 + t2) = 185.12 -> 185;
    // x=1 sees only the real 255 at distance 1: 255 * t2 = 69.88 -> 70.
    #[test]
    fn edge_replicate_padding_frozen_values() {
        let img = Raster::from_vec(3, 1, Channels::Gray, vec![0, 0, 255]).unwrap();
        let out = gaussian_blur(&img, 3, 1.0).unwrap();
        assert_eq!(out.data(), &[0, 70, 185]);
    }

    #[test]
    fn rejects_bad_parameters() {
        let img = Raster::filled(4, 4, Channels::Gray, 0);
        assert!(matches!(
            gaussian_blur(&img, 4, 1.4),
            Err(ImagingError::InvalidParameter(_))
        ));
        assert!(gaussian_blur(&img, 0, 1.4).is_err());
        assert!(gaussian_blur(&img, 5, 0.0).is_err());
        assert!(gaussian_blur(&img, 5, f64::NAN).is_err());
        let rgb = Raster::filled(4, 4, Channels::Rgb, 0);
        assert!(matches!(
            gaussian_blur(&rgb, 5, 1.4),
            Err(ImagingError::ChannelMismatch { .. })
        ));
    }

    proptest! {
        // A normalized kernel is a convex combination: output values stay
        // within the input range and dimensions are unchanged.
        #[test]
        fn output_within_input_range(
            data in proptest::collection::vec(any::<u8>(), 8 * 6),
            kernel in prop_oneof![Just(1u32), Just(3), Just(5), Just(7)],
            sigma in 0.3f64..4.0,
        ) {
            let img = Raster::from_vec(8, 6, Channels::Gray, data).unwrap();
            let lo = *img.data().iter().min().unwrap();
            let hi = *img.data().iter().max().unwrap();
            let out = gaussian_blur(&img, kernel, sigma).unwrap();
            prop_assert_eq!((out.width(), out.height()), (8, 6));
            prop_assert!(out.data().iter().all(|&v| v >= lo && v <= hi));
        }
    }
}
