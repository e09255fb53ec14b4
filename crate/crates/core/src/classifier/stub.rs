//! Scriptable stand-in oracles with known decision rules, used for
//! deterministic end-to-end tests and offline demos.

use serde::{Deserialize, Serialize};

use super::{ClassLabel, Oracle, OracleError, Verdict};
use crate::raster::Raster;

/// The decision rule a [`StubClassifier`] applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum StubRule {
    /// Predicts whichever image quadrant is brightest on average. Labels are
    /// `top-left` (0), `top-right` (1), `bottom-left` (2), `bottom-right`
    /// (3); the distribution is the four quadrant means normalized to sum
    /// to 1 (uniform when the image is all black). Exact ties go to the
    /// lowest id.
    QuadrantBrightness,
    /// Predicts `bright` (1) when the global mean channel value is at least
    /// `threshold`, else `dark` (0). Confidence grows with the distance
    /// from the threshold: `0.5 + |mean - threshold| / 510`.
    MeanThreshold { threshold: u8 },
    /// Always returns the same verdict, regardless of input.
    FixedVerdict { label: ClassLabel, confidence: f64 },
}

/// A deterministic oracle driven by a [`StubRule`].
pub struct StubClassifier {
    rule: StubRule,
    labels: Vec<ClassLabel>,
}

impl StubClassifier {
    #[must_use]
    pub fn new(rule: StubRule) -> Self {
        let labels = match &rule {
            StubRule::QuadrantBrightness => ["top-left", "top-right", "bottom-left", "bottom-right"]
                .iter()
                .enumerate()
                .map(|(i, n)| ClassLabel::new(i as u32, *n))
                .collect(),
            StubRule::MeanThreshold { .. } => vec![
                ClassLabel::new(0, "dark"),
                ClassLabel::new(1, "bright"),
            ],
            StubRule::FixedVerdict { label, .. } => vec![label.clone()],
        };
        Self { rule, labels }
    }

    #[must_use]
    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    #[must_use]
    pub fn rule(&self) -> &StubRule {
        &self.rule
    }

    /// Mean channel value over the half-open pixel rectangle
    /// `[x0, x1) x [y0, y1)`, or 0 when the rectangle is empty.
    fn region_mean(img: &Raster, x0: u32, x1: u32, y0: u32, y1: u32) -> f64 {
        let channels = img.channels().count() as u32;
        let mut sum = 0u64;
        let mut count = 0u64;
        for y in y0..y1 {
            for x in x0..x1 {
                for v in img.pixel(x, y) {
                    sum += u64::from(*v);
                    count += 1;
                }
            }
        }
        debug_assert_eq!(count, u64::from((x1 - x0) * (y1 - y0) * channels));
        if count == 0 {
            0.0
        } else {
            sum as f64 / count as f64
        }
    }
}

impl Oracle for StubClassifier {
    fn classify(&self, image: &Raster) -> Result<Verdict, OracleError> {
        match &self.rule {
            StubRule::QuadrantBrightness => {
                let (w, h) = (image.width(), image.height());
                let (mx, my) = (w / 2, h / 2);
                let means = [
                    Self::region_mean(image, 0, mx, 0, my),
                    Self::region_mean(image, mx, w, 0, my),
                    Self::region_mean(image, 0, mx, my, h),
                    Self::region_mean(image, mx, w, my, h),
                ];
                let total: f64 = means.iter().sum();
                let distribution: Vec<f64> = if total == 0.0 {
                    vec![0.25; 4]
                } else {
                    means.iter().map(|m| m / total).collect()
                };
                Verdict::from_distribution(distribution, &self.labels)
            }
            StubRule::MeanThreshold { threshold } => {
                let mean =
                    Self::region_mean(image, 0, image.width(), 0, image.height());
                let bright = mean >= f64::from(*threshold);
                let label = self.labels[usize::from(bright)].clone();
                let confidence = 0.5 + (mean - f64::from(*threshold)).abs() / 510.0;
                Ok(Verdict {
                    label,
                    confidence,
                    distribution: None,
                })
            }
            StubRule::FixedVerdict { label, confidence } => Ok(Verdict {
                label: label.clone(),
                confidence: *confidence,
                distribution: None,
            }),
        }
    }
}
