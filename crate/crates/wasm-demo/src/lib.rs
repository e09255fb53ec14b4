//! WebAssembly bindings for the browser demo.
//!
//! Every export takes and returns plain bytes so the same functions compile
//! and run on the host (for tests) and under `wasm32-unknown-unknown`. A
//! call returns an *envelope*: a little-endian `u32` JSON length, the JSON
//! document, then an optional PNG payload. Success documents carry
//! operation-specific fields; failures are `{"error": "..."}` with an empty
//! payload. `www/index.html` decodes the same framing in JavaScript.

use serde::Serialize;
use snowball_core::{
    baseline_search, generate_mask, shrink_mask, BinaryMask, MaskParams, Oracle, Patch, Raster,
    SearchConfig, StubClassifier, StubRule,
};
use wasm_bindgen::prelude::wasm_bindgen;

fn envelope(json: &impl Serialize, payload: &[u8]) -> Vec<u8> {
    let doc = serde_json::to_vec(json).expect("demo responses always serialize");
    let mut out = Vec::with_capacity(4 + doc.len() + payload.len());
    out.extend_from_slice(&(doc.len() as u32).to_le_bytes());
    out.extend_from_slice(&doc);
    out.extend_from_slice(payload);
    out
}

fn error_envelope(message: impl std::fmt::Display) -> Vec<u8> {
    #[derive(Serialize)]
    struct ErrorDoc {
        error: String,
    }
    envelope(
        &ErrorDoc {
            error: message.to_string(),
        },
        &[],
    )
}

fn stub_oracle(rule: &str, threshold: u8) -> Result<StubClassifier, String> {
    match rule {
        "quadrant-brightness" => Ok(StubClassifier::new(StubRule::QuadrantBrightness)),
        "mean-threshold" => Ok(StubClassifier::new(StubRule::MeanThreshold { threshold })),
        other => Err(format!(
            "unknown stub rule '{other}' (expected quadrant-brightness or mean-threshold)"
        )),
    }
}

/// Derives the perturbation mask for a sign photo and returns it as a PNG
/// payload alongside its geometry.
#[wasm_bindgen]
pub fn derive_mask(
    sign_png: &[u8],
    blur_kernel: u32,
    blur_sigma: f64,
    canny_low: u8,
    canny_high: u8,
    close_radius: u32,
) -> Vec<u8> {
    #[derive(Serialize)]
    struct MaskDoc {
        width: u32,
        height: u32,
        valid_area: u64,
        centroid: Option<(u32, u32)>,
    }

    let run = || -> Result<(MaskDoc, Vec<u8>), String> {
        let sign = Raster::decode_png(sign_png).map_err(|e| e.to_string())?;
        let params = MaskParams {
            blur_kernel,
            blur_sigma,
            canny_low,
            canny_high,
            close_radius,
        };
        let mask = generate_mask(&sign, &params).map_err(|e| e.to_string())?;
        let png = mask.to_raster().encode_png().map_err(|e| e.to_string())?;
        Ok((
            MaskDoc {
                width: mask.width(),
                height: mask.height(),
                valid_area: mask.valid_area(),
                centroid: mask.centroid(),
            },
            png,
        ))
    };
    match run() {
        Ok((doc, png)) => envelope(&doc, &png),
        Err(message) => error_envelope(message),
    }
}

/// Restricts a mask PNG to the smallest square window around `(center_x,
/// center_y)` keeping `fraction` of its valid area, returning the shrunk
/// mask as a PNG payload.
#[wasm_bindgen]
pub fn shrink_preview(mask_png: &[u8], center_x: u32, center_y: u32, fraction: f64) -> Vec<u8> {
    #[derive(Serialize)]
    struct ShrinkDoc {
        fraction: f64,
        original_area: u64,
        kept_area: u64,
    }

    let run = || -> Result<(ShrinkDoc, Vec<u8>), String> {
        let raster = Raster::decode_png(mask_png).map_err(|e| e.to_string())?;
        let mask = BinaryMask::from_raster(&raster).map_err(|e| e.to_string())?;
        let shrunk =
            shrink_mask(&mask, (center_x, center_y), fraction).map_err(|e| e.to_string())?;
        let png = shrunk.to_raster().encode_png().map_err(|e| e.to_string())?;
        Ok((
            ShrinkDoc {
                fraction,
                original_area: mask.valid_area(),
                kept_area: shrunk.valid_area(),
            },
            png,
        ))
    };
    match run() {
        Ok((doc, png)) => envelope(&doc, &png),
        Err(message) => error_envelope(message),
    }
}

/// Runs a single-patch exhaustive attack against a stub oracle: derives the
/// mask with default parameters, classifies the clean sign for the true
/// label, then searches every placement. The payload is the adversarial PNG
/// when a misclassifying placement exists, empty otherwise.
#[wasm_bindgen]
pub fn run_attack(
    sign_png: &[u8],
    patch_png: &[u8],
    rule: &str,
    threshold: u8,
    size_ratio: f64,
) -> Vec<u8> {
    #[derive(Serialize)]
    struct AttackDoc {
        success: bool,
        true_label: snowball_core::ClassLabel,
        best: Option<snowball_core::CandidateScore>,
        evaluations: u64,
    }

    let run = || -> Result<(AttackDoc, Vec<u8>), String> {
        let sign = Raster::decode_png(sign_png)
            .map_err(|e| format!("sign image: {e}"))?
            .to_rgb();
        let patch_img = Raster::decode_png(patch_png)
            .map_err(|e| format!("patch image: {e}"))?
            .to_rgba();
        let oracle = stub_oracle(rule, threshold)?;
        let mask = generate_mask(&sign, &MaskParams::default())
            .map_err(|e| format!("mask derivation: {e}"))?;
        let true_label = oracle.classify(&sign).map_err(|e| e.to_string())?.label;
        let patch = Patch {
            image: patch_img,
            rotatable: true,
        };
        let config = SearchConfig {
            size_ratio,
            ..SearchConfig::default()
        };
        let result = baseline_search(&sign, &mask, &patch, &true_label, &oracle, &config)
            .map_err(|e| e.to_string())?;
        let payload = match &result.adversarial {
            Some(image) => image.encode_png().map_err(|e| e.to_string())?,
            None => Vec::new(),
        };
        Ok((
            AttackDoc {
                success: result.success,
                true_label,
                best: result.best,
                evaluations: result.evaluations,
            },
            payload,
        ))
    };
    match run() {
        Ok((doc, png)) => envelope(&doc, &png),
        Err(message) => error_envelope(message),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use snowball_core::Channels;

    /// Splits an envelope into its JSON document and payload.
    fn open(envelope: &[u8]) -> (serde_json::Value, &[u8]) {
        let len = u32::from_le_bytes(envelope[..4].try_into().unwrap()) as usize;
        let doc = serde_json::from_slice(&envelope[4..4 + len]).unwrap();
        (doc, &envelope[4 + len..])
    }

    /// A bright centered square on a dark field, as PNG bytes.
    fn square_sign_png(side: u32) -> Vec<u8> {
        let mut img = Raster::filled(side, side, Channels::Rgb, 25);
        let (lo, hi) = (side / 4, 3 * side / 4);
        for y in lo..hi {
            for x in lo..hi {
                img.set_pixel(x, y, &[230, 230, 230]);
            }
        }
        img.encode_png().unwrap()
    }

    #[test]
    fn derive_mask_returns_a_binary_png_and_geometry() {
        let png = square_sign_png(96);
        let out = derive_mask(&png, 5, 1.4, 50, 150, 2);
        let (doc, payload) = open(&out);
        assert_eq!(doc["width"], 96);
        assert_eq!(doc["height"], 96);
        assert!(doc["valid_area"].as_u64().unwrap() > 1000);
        let cx = doc["centroid"][0].as_u64().unwrap();
        assert!((46..=49).contains(&cx), "centroid x {cx} off the square");

        let mask = BinaryMask::from_raster(&Raster::decode_png(payload).unwrap()).unwrap();
        assert_eq!(mask.valid_area(), doc["valid_area"].as_u64().unwrap());
    }

    #[test]
    fn garbage_bytes_produce_an_error_document() {
        let out = derive_mask(b"not a png", 5, 1.4, 50, 150, 2);
        let (doc, payload) = open(&out);
        assert!(doc["error"].as_str().unwrap().len() > 1);
        assert!(payload.is_empty());

        let out = run_attack(b"nope", b"nope", "quadrant-brightness", 128, 0.3);
        let (doc, _) = open(&out);
        assert!(doc["error"].as_str().unwrap().contains("sign image"));

        let out = run_attack(&square_sign_png(32), &square_sign_png(8), "bogus", 128, 0.3);
        let (doc, _) = open(&out);
        assert!(doc["error"].as_str().unwrap().contains("unknown stub rule"));
    }

    #[test]
    fn shrink_preview_keeps_the_requested_fraction() {
        let mask_png = BinaryMask::filled(80, 80, true)
            .to_raster()
            .encode_png()
            .unwrap();
        let out = shrink_preview(&mask_png, 40, 40, 0.25);
        let (doc, payload) = open(&out);
        assert_eq!(doc["original_area"], 6400);
        assert_eq!(doc["kept_area"], 1600);
        let shrunk = BinaryMask::from_raster(&Raster::decode_png(payload).unwrap()).unwrap();
        assert_eq!(shrunk.valid_area(), 1600);
    }

    #[test]
    fn attack_against_the_quadrant_stub_finds_a_flip() {
        let sign_png = square_sign_png(72);
        let patch_png = Raster::filled(10, 10, Channels::Rgba, 255)
            .encode_png()
            .unwrap();
        let out = run_attack(&sign_png, &patch_png, "quadrant-brightness", 128, 0.4);
        let (doc, payload) = open(&out);
        assert_eq!(doc["success"], true, "{doc}");
        assert!(doc["evaluations"].as_u64().unwrap() > 0);
        assert!(!payload.is_empty(), "success must ship the adversarial PNG");

        // The shipped image really does re-classify to the reported label.
        let adversarial = Raster::decode_png(payload).unwrap();
        let oracle = StubClassifier::new(StubRule::QuadrantBrightness);
        let verdict = oracle.classify(&adversarial).unwrap();
        assert_eq!(
            verdict.label.id,
            doc["best"]["label"]["id"].as_u64().unwrap() as u32
        );
    }
}
