//! Classification oracles: the common verdict types, the `Oracle` trait the
//! search queries, a builtin CNN-backed classifier, and scriptable stubs.

mod format;
mod network;
mod stub;

pub use format::{
    decode_weights, encode_weights, load_weights, load_weights_with_input, save_weights, MAGIC,
    VERSION,
};
pub use network::{cnn_forward, softmax, InputShape, Layer, ModelError, ModelWeights};
pub use stub::{StubClassifier, StubRule};

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::resize_bilinear;
use crate::raster::Raster;

/// A class identity: a stable numeric id plus a human-readable name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassLabel {
    pub id: u32,
    pub name: String,
}

impl ClassLabel {
    #[must_use]
    pub fn new(id: u32, name: impl Into<String>) -> Self {
        Self {
            id,
            name: name.into(),
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)
    }
}

/// One oracle answer: the predicted label, its confidence in `[0, 1]`, and
/// optionally the full class distribution the prediction came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: ClassLabel,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<Vec<f64>>,
}

impl Verdict {
    /// Builds a verdict from a full distribution: the label is the argmax
    /// (lowest id on exact ties) and the confidence is that entry.
    pub fn from_distribution(
        distribution: Vec<f64>,
        labels: &[ClassLabel],
    ) -> Result<Self, OracleError> {
        if distribution.len() != labels.len() {
            return Err(OracleError::Protocol(format!(
                "distribution has {} entries for {} labels",
                distribution.len(),
                labels.len()
            )));
        }
        if distribution.is_empty() {
            return Err(OracleError::Protocol("empty distribution".into()));
        }
        let mut best = 0usize;
        for (i, v) in distribution.iter().enumerate() {
            if *v > distribution[best] {
                best = i;
            }
        }
        Ok(Self {
            label: labels[best].clone(),
            confidence: distribution[best],
            distribution: Some(distribution),
        })
    }
}

/// Errors an oracle can report. `Transport` failures are retryable (the
/// request may never have reached the classifier); the rest are fatal.
#[derive(Debug, Error)]
pub enum OracleError {
    #[error("transport error (retryable): {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid input image: {0}")]
    InvalidInput(String),
}

/// A black-box image classifier. Implementations must be callable from
/// multiple threads; a call must not observe effects of concurrent calls.
pub trait Oracle: Send + Sync {
    fn classify(&self, image: &Raster) -> Result<Verdict, OracleError>;
}

/// Errors from parsing a class-list file.
#[derive(Debug, Error)]
pub enum ClassListError {
    #[error("class list is empty")]
    Empty,
    #[error("duplicate class name {name:?} on line {line}")]
    DuplicateName { name: String, line: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Parses a class list: one name per line, id = zero-based line position.
/// Blank lines and surrounding whitespace are ignored; names must be unique.
pub fn parse_class_list(text: &str) -> Result<Vec<ClassLabel>, ClassListError> {
    let mut labels: Vec<ClassLabel> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let name = line.trim();
        if name.is_empty() {
            continue;
        }
        if labels.iter().any(|l| l.name == name) {
            return Err(ClassListError::DuplicateName {
                name: name.to_string(),
                line: lineno + 1,
            });
        }
        labels.push(ClassLabel::new(labels.len() as u32, name));
    }
    if labels.is_empty() {
        return Err(ClassListError::Empty);
    }
    Ok(labels)
}

/// Reads and parses a class-list file.
pub fn load_class_list(path: impl AsRef<Path>) -> Result<Vec<ClassLabel>, ClassListError> {
    parse_class_list(&std::fs::read_to_string(path)?)
}

/// A local CNN classifier: resizes the image to the model's declared input,
/// scales bytes to `[0, 1]`, runs the forward pass, and applies softmax in
/// `f64` to turn logits into a distribution.
pub struct BuiltinClassifier {
    model: ModelWeights,
    labels: Vec<ClassLabel>,
}

impl BuiltinClassifier {
    /// Requires the label count to match the model's output length and the
    /// declared input to have 1 or 3 channels.
    pub fn new(model: ModelWeights, labels: Vec<ClassLabel>) -> Result<Self, OracleError> {
        let out = model.output_len()?;
        if labels.is_empty() || labels.len() != out {
            return Err(OracleError::Protocol(format!(
                "model produces {out} logits but {} labels were supplied",
                labels.len()
            )));
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].iter().any(|b| b.name == a.name || b.id == a.id) {
                return Err(OracleError::Protocol(format!(
                    "duplicate label {:?} (id {})",
                    a.name, a.id
                )));
            }
        }
        let c = model.input_shape().channels;
        if c != 1 && c != 3 {
            return Err(OracleError::Protocol(format!(
                "declared input has {c} channels; only 1 or 3 are supported"
            )));
        }
        Ok(Self { model, labels })
    }

    #[must_use]
    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    #[must_use]
    pub fn model(&self) -> &ModelWeights {
        &self.model
    }

    /// Resizes + normalizes an image into the model's input tensor.
    fn prepare(&self, image: &Raster) -> Vec<f32> {
        let shape = self.model.input_shape();
        let rgb = image.to_rgb();
        let resized = if rgb.width() == shape.width && rgb.height() == shape.height {
            rgb
        } else {
            resize_bilinear(&rgb, shape.width, shape.height)
        };
        let mut tensor = Vec::with_capacity(shape.len());
        for y in 0..shape.height {
            for x in 0..shape.width {
                let px = resized.pixel(x, y);
                if shape.channels == 3 {
                    for &v in &px[..3] {
                        tensor.push(f32::from(v) / 255.0);
                    }
                } else {
                    let luma = (0.299 * f64::from(px[0])
                        + 0.587 * f64::from(px[1])
                        + 0.114 * f64::from(px[2]))
                    .round() as u8;
                    tensor.push(f32::from(luma) / 255.0);
                }
            }
        }
        tensor
    }
}

impl Oracle for BuiltinClassifier {
    fn classify(&self, image: &Raster) -> Result<Verdict, OracleError> {
        let tensor = self.prepare(image);
        let logits = cnn_forward(&self.model, &tensor)?;
        let distribution = softmax(&logits.iter().map(|&v| f64::from(v)).collect::<Vec<_>>());
        Verdict::from_distribution(distribution, &self.labels)
    }
}
