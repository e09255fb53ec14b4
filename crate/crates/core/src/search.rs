//! Black-box patch placement search.
//!
//! [`baseline_search`] exhaustively sweeps a patch over a placement grid on
//! one image, querying a classification oracle for every candidate and
//! keeping the misclassified candidate with the highest confidence.
//! [`optimized_search`] runs a sequence of patches, using the first patch's
//! winning placement to shrink the search region and restrict the rotation
//! set for the remaining patches, which cuts oracle traffic roughly in
//! proportion to the region fraction.
//!
//! All searches are deterministic: candidates are generated and compared in
//! a canonical order (grid position row-major, then scales, then angles, in
//! their configured order), ties in confidence resolve to the earliest
//! candidate, and parallel evaluation preserves that order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{ClassLabel, Oracle, OracleError, Verdict};
use crate::imaging::{composite, transform_patch, ImagingError};
use crate::mask::{shrink_mask, valid_placements, BinaryMask, MaskError};
use crate::raster::Raster;

/// Search parameters. `Default` gives the reference configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Patch footprint size as a fraction of the square root of the mask
    /// area: a ratio of 0.35 on a 10000-pixel mask gives a 35-pixel side.
    pub size_ratio: f64,
    /// Scale multipliers applied on top of the base footprint.
    pub scales: Vec<f64>,
    /// Rotations in degrees. Ignored for patches marked non-rotatable.
    pub angles: Vec<f64>,
    /// Grid stride in pixels; `None` derives `max(1, base_size / 8)`.
    pub stride: Option<u32>,
    /// Fraction of the mask area the follow-up search region keeps.
    pub shrink_fraction: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            size_ratio: 0.35,
            scales: vec![1.0],
            angles: vec![0.0, 90.0, 180.0, 270.0],
            stride: None,
            shrink_fraction: 1.0,
        }
    }
}

/// A patch image plus whether the search may rotate it.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    /// RGBA patch art; transparent pixels never touch the base image.
    pub image: Raster,
    pub rotatable: bool,
}

/// Where and how a candidate patch was applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    /// Top-left corner where the transformed patch was composited.
    pub x: u32,
    pub y: u32,
    /// Center of the grid footprint the candidate is anchored on.
    pub center_x: u32,
    pub center_y: u32,
    /// Configured scale multiplier (1.0 = the base footprint).
    pub scale: f64,
    /// Rotation in degrees.
    pub angle: f64,
}

/// A successful (misclassifying) candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub placement: Placement,
    /// The wrong label the oracle reported.
    pub label: ClassLabel,
    /// Oracle confidence in that wrong label.
    pub confidence: f64,
}

/// Outcome of one patch search.
#[derive(Debug, Clone)]
pub struct AttackResult {
    /// True when at least one candidate was misclassified.
    pub success: bool,
    /// The highest-confidence misclassified candidate.
    pub best: Option<CandidateScore>,
    /// The composited image for `best`.
    pub adversarial: Option<Raster>,
    /// Number of oracle queries made for candidates. The initial clean-image
    /// check is not counted.
    pub evaluations: u64,
    /// Wall-clock seconds spent in the candidate evaluation loop. Always
    /// 0.0 on targets without a monotonic clock (wasm32).
    pub elapsed_secs: f64,
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("clean image already classified as {got:?}, expected {expected:?}")]
    BaselineMisclassified { expected: String, got: String },
    #[error("no feasible placement: {0}")]
    NoFeasiblePlacement(String),
    #[error("oracle failed on the clean image: {0}")]
    CleanCheckFailed(#[source] OracleError),
    #[error("oracle failed while evaluating placement at ({x}, {y}): {source}")]
    Oracle {
        x: u32,
        y: u32,
        #[source]
        source: OracleError,
    },
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// Side length of the base patch footprint for a mask of `mask_area` set
/// pixels: `round(size_ratio * sqrt(mask_area))`, at least 1.
#[must_use]
pub fn patch_base_size(size_ratio: f64, mask_area: u64) -> u32 {
    let side = (size_ratio * (mask_area as f64).sqrt()).round();
    (side as u32).max(1)
}

/// Composites `patch` onto `base` at `(x, y)` and asks the oracle for a
/// verdict. Returns the verdict together with the composited image.
pub fn evaluate_candidate(
    base: &Raster,
    patch: &Raster,
    x: u32,
    y: u32,
    oracle: &dyn Oracle,
) -> Result<(Verdict, Raster), SearchError> {
    let composited = composite(base, patch, x, y)?;
    let verdict = oracle
        .classify(&composited)
        .map_err(|source| SearchError::Oracle { x, y, source })?;
    Ok((verdict, composited))
}

fn validate_config(config: &SearchConfig) -> Result<(), SearchError> {
    let bad = |msg: String| Err(SearchError::InvalidConfig(msg));
    if !(config.size_ratio.is_finite() && config.size_ratio > 0.0) {
        return bad(format!("size_ratio must be positive, got {}", config.size_ratio));
    }
    if config.scales.is_empty() {
        return bad("scales must not be empty".into());
    }
    for (i, s) in config.scales.iter().enumerate() {
        if !(s.is_finite() && *s > 0.0) {
            return bad(format!("scale {i} must be positive and finite, got {s}"));
        }
        if config.scales[..i].contains(s) {
            return bad(format!("duplicate scale {s}"));
        }
    }
    if config.angles.is_empty() {
        return bad("angles must not be empty".into());
    }
    for (i, a) in config.angles.iter().enumerate() {
        if !a.is_finite() {
            return bad(format!("angle {i} must be finite, got {a}"));
        }
        if config.angles[..i].contains(a) {
            return bad(format!("duplicate angle {a}"));
        }
    }
    if config.stride == Some(0) {
        return bad("stride must be at least 1".into());
    }
    if !(config.shrink_fraction.is_finite()
        && config.shrink_fraction > 0.0
        && config.shrink_fraction <= 1.0)
    {
        return bad(format!(
            "shrink_fraction must be in (0, 1], got {}",
            config.shrink_fraction
        ));
    }
    Ok(())
}

struct Candidate {
    x: u32,
    y: u32,
    center_x: u32,
    center_y: u32,
    scale: f64,
    angle: f64,
    patch_idx: usize,
}

/// Shared implementation: `sizing_area` decouples the footprint size from
/// the placement mask so a shrunk search region keeps the original patch
/// size.
fn run_search(
    base: &Raster,
    mask: &BinaryMask,
    sizing_area: u64,
    patch: &Patch,
    true_label: &ClassLabel,
    oracle: &dyn Oracle,
    config: &SearchConfig,
) -> Result<AttackResult, SearchError> {
    if mask.width() != base.width() || mask.height() != base.height() {
        return Err(SearchError::InvalidConfig(format!(
            "mask is {}x{} but the image is {}x{}",
            mask.width(),
            mask.height(),
            base.width(),
            base.height()
        )));
    }

    // Clean check: the attack is meaningful only when the unmodified image
    // classifies as the expected label. This query is not counted.
    let clean = oracle
        .classify(base)
        .map_err(SearchError::CleanCheckFailed)?;
    if clean.label.id != true_label.id {
        return Err(SearchError::BaselineMisclassified {
            expected: true_label.name.clone(),
            got: clean.label.name.clone(),
        });
    }

    let base_size = patch_base_size(config.size_ratio, sizing_area);
    let longer = patch.image.width().max(patch.image.height());
    let base_scale = f64::from(base_size) / f64::from(longer);
    let stride = config.stride.unwrap_or_else(|| (base_size / 8).max(1));

    // One transformed raster per (scale, angle) pair, reused by every grid
    // position.
    let angles: &[f64] = if patch.rotatable {
        &config.angles
    } else {
        &[0.0]
    };
    let mut transformed = Vec::with_capacity(config.scales.len() * angles.len());
    for &scale in &config.scales {
        for &angle in angles {
            transformed.push(transform_patch(&patch.image, base_scale * scale, angle)?);
        }
    }

    // The grid is built from the un-rotated scale-1.0 footprint; every
    // (scale, angle) variant is centered on the same footprint centers.
    let footprint = transform_patch(&patch.image, base_scale, 0.0)?;
    let (fw, fh) = (footprint.width(), footprint.height());
    if fw > mask.width() || fh > mask.height() {
        return Err(SearchError::NoFeasiblePlacement(format!(
            "{fw}x{fh} patch footprint exceeds the {}x{} mask",
            mask.width(),
            mask.height()
        )));
    }
    let positions = valid_placements(mask, fw, fh, stride)?;

    let mut candidates = Vec::new();
    for &(gx, gy) in &positions {
        let center_x = gx + fw / 2;
        let center_y = gy + fh / 2;
        for (si, _) in config.scales.iter().enumerate() {
            for (ai, _) in angles.iter().enumerate() {
                let patch_idx = si * angles.len() + ai;
                let t = &transformed[patch_idx];
                let px = i64::from(center_x) - i64::from(t.width() / 2);
                let py = i64::from(center_y) - i64::from(t.height() / 2);
                let fits = px >= 0
                    && py >= 0
                    && px + i64::from(t.width()) <= i64::from(base.width())
                    && py + i64::from(t.height()) <= i64::from(base.height());
                if !fits {
                    // Out-of-bounds variants are skipped without an oracle
                    // query and without counting as an evaluation.
                    continue;
                }
                candidates.push(Candidate {
                    x: px as u32,
                    y: py as u32,
                    center_x,
                    center_y,
                    scale: config.scales[si],
                    angle: angles[ai],
                    patch_idx,
                });
            }
        }
    }
    if candidates.is_empty() {
        return Err(SearchError::NoFeasiblePlacement(
            "no candidate placement fits the mask and image bounds".into(),
        ));
    }

    let eval = |c: &Candidate| -> Result<Option<CandidateScore>, SearchError> {
        let (verdict, _) = evaluate_candidate(base, &transformed[c.patch_idx], c.x, c.y, oracle)?;
        if verdict.label.id != true_label.id {
            Ok(Some(CandidateScore {
                placement: Placement {
                    x: c.x,
                    y: c.y,
                    center_x: c.center_x,
                    center_y: c.center_y,
                    scale: c.scale,
                    angle: c.angle,
                },
                label: verdict.label,
                confidence: verdict.confidence,
            }))
        } else {
            Ok(None)
        }
    };

    #[cfg(not(target_arch = "wasm32"))]
    let started = std::time::Instant::now();

    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<Option<CandidateScore>, SearchError>> = {
        use rayon::prelude::*;
        candidates.par_iter().map(eval).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<Option<CandidateScore>, SearchError>> =
        candidates.iter().map(eval).collect();

    #[cfg(not(target_arch = "wasm32"))]
    let elapsed_secs = started.elapsed().as_secs_f64();
    #[cfg(target_arch = "wasm32")]
    let elapsed_secs = 0.0;

    // Sequential reduction in canonical candidate order keeps the result
    // (including the reported error, if any) independent of thread count.
    let mut best: Option<CandidateScore> = None;
    for outcome in outcomes {
        if let Some(score) = outcome? {
            let better = match &best {
                Some(b) => score.confidence > b.confidence,
                None => true,
            };
            if better {
                best = Some(score);
            }
        }
    }

    let adversarial = match &best {
        Some(score) => {
            let idx = candidates
                .iter()
                .position(|c| {
                    c.x == score.placement.x
                        && c.y == score.placement.y
                        && c.scale == score.placement.scale
                        && c.angle == score.placement.angle
                })
                .expect("best candidate came from the candidate list");
            Some(composite(
                base,
                &transformed[candidates[idx].patch_idx],
                score.placement.x,
                score.placement.y,
            )?)
        }
        None => None,
    };

    Ok(AttackResult {
        success: best.is_some(),
        best,
        adversarial,
        evaluations: candidates.len() as u64,
        elapsed_secs,
    })
}

/// Exhaustive single-patch search over the full mask.
pub fn baseline_search(
    base: &Raster,
    mask: &BinaryMask,
    patch: &Patch,
    true_label: &ClassLabel,
    oracle: &dyn Oracle,
    config: &SearchConfig,
) -> Result<AttackResult, SearchError> {
    validate_config(config)?;
    let area = mask.valid_area();
    if area == 0 {
        return Err(SearchError::NoFeasiblePlacement(
            "mask has no valid pixels".into(),
        ));
    }
    run_search(base, mask, area, patch, true_label, oracle, config)
}

/// Multi-patch search. The first patch runs a full [`baseline_search`];
/// when `shrink_fraction < 1.0`, every later patch searches a mask window
/// holding that fraction of the area, centered on the first patch's winning
/// placement (or the mask centroid when the first patch found none), with
/// rotations restricted to 0 degrees and the winning angle. With
/// `shrink_fraction == 1.0` every patch gets the exact baseline treatment.
///
/// Patch failures are isolated: one patch's error leaves the others' results
/// intact.
pub fn optimized_search(
    base: &Raster,
    mask: &BinaryMask,
    patches: &[Patch],
    true_label: &ClassLabel,
    oracle: &dyn Oracle,
    config: &SearchConfig,
) -> Result<Vec<Result<AttackResult, SearchError>>, SearchError> {
    validate_config(config)?;
    if patches.is_empty() {
        return Err(SearchError::InvalidConfig("no patches supplied".into()));
    }
    let full_area = mask.valid_area();
    if full_area == 0 {
        return Err(SearchError::NoFeasiblePlacement(
            "mask has no valid pixels".into(),
        ));
    }

    let mut results: Vec<Result<AttackResult, SearchError>> = Vec::with_capacity(patches.len());
    let first = run_search(base, mask, full_area, &patches[0], true_label, oracle, config);

    let anchor = match &first {
        Ok(r) => r
            .best
            .as_ref()
            .map(|s| (s.placement.center_x, s.placement.center_y)),
        Err(_) => None,
    };
    let winning_angle = match &first {
        Ok(r) => r.best.as_ref().map(|s| s.placement.angle),
        Err(_) => None,
    };
    results.push(first);

    let shrink = config.shrink_fraction < 1.0;
    let narrowed_mask = if shrink {
        let center = anchor
            .or_else(|| mask.centroid())
            .expect("non-empty mask has a centroid");
        Some(shrink_mask(mask, center, config.shrink_fraction)?)
    } else {
        None
    };
    let narrowed_config = if shrink {
        let mut c = config.clone();
        if let Some(win) = winning_angle {
            c.angles = if win == 0.0 { vec![0.0] } else { vec![0.0, win] };
        }
        Some(c)
    } else {
        None
    };

    for patch in &patches[1..] {
        let (m, c) = match (&narrowed_mask, &narrowed_config) {
            (Some(m), Some(c)) => (m, c),
            _ => (mask, config),
        };
        results.push(run_search(base, m, full_area, patch, true_label, oracle, c));
    }
    Ok(results)
}
