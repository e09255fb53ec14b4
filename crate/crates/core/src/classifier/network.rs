//! Shape-generic CNN inference: layer definitions, eager chain validation,
//! the forward pass, and softmax.

use thiserror::Error;

/// Errors for model files and shape validation.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad magic bytes: expected \"SNWB\"")]
    BadMagic,
    #[error("unsupported weights format version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown layer kind tag {0}")]
    UnknownKind(u8),
    #[error("file truncated while reading {0}")]
    Truncated(String),
    #[error("{0} trailing bytes after the declared layers")]
    TrailingBytes(usize),
    #[error("layer {index} ({kind}): {detail}")]
    ShapeMismatch {
        index: usize,
        kind: &'static str,
        detail: String,
    },
    #[error("input tensor has {got} values, model expects {expected}")]
    InputMismatch { expected: usize, got: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Declared input tensor shape (height, width, channels).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputShape {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
}

impl Default for InputShape {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            channels: 3,
        }
    }
}

impl InputShape {
    #[must_use]
    pub fn len(&self) -> usize {
        self.height as usize * self.width as usize * self.channels as usize
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One network layer. Tensors are HWC row-major; convolution weights are
/// `[out_c][in_c][ky][kx]`, dense weights `[out][in]`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv {
        out_c: u32,
        in_c: u32,
        kh: u32,
        kw: u32,
        weights: Vec<f32>,
        bias: Vec<f32>,
    },
    MaxPool,
    Relu,
    Flatten,
    Dense {
        out: u32,
        input: u32,
        weights: Vec<f32>,
        bias: Vec<f32>,
    },
    Softmax,
}

impl Layer {
    #[must_use]
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Conv { .. } => "conv",
            Layer::MaxPool => "maxpool",
            Layer::Relu => "relu",
            Layer::Flatten => "flatten",
            Layer::Dense { .. } => "dense",
            Layer::Softmax => "softmax",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Tensor { h: u32, w: u32, c: u32 },
    Vector(usize),
}

/// A validated layer stack plus its declared input shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    layers: Vec<Layer>,
    input: InputShape,
}

impl ModelWeights {
    /// Builds a model, eagerly validating that consecutive layer shapes
    /// chain together from the declared input.
    pub fn new(layers: Vec<Layer>, input: InputShape) -> Result<Self, ModelError> {
        let model = Self { layers, input };
        model.validate()?;
        Ok(model)
    }

    #[must_use]
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    #[must_use]
    pub fn input_shape(&self) -> InputShape {
        self.input
    }

    /// Length of the logits vector the forward pass produces.
    pub fn output_len(&self) -> Result<usize, ModelError> {
        match self.validate()? {
            Shape::Vector(n) => Ok(n),
            Shape::Tensor { h, w, c } => Ok(h as usize * w as usize * c as usize),
        }
    }

    fn validate(&self) -> Result<Shape, ModelError> {
        let mismatch = |index: usize, kind: &'static str, detail: String| {
            ModelError::ShapeMismatch {
                index,
                kind,
                detail,
            }
        };
        if self.input.height == 0 || self.input.width == 0 || self.input.channels == 0 {
            return Err(ModelError::ShapeMismatch {
                index: 0,
                kind: "input",
                detail: format!(
                    "declared input {}x{}x{} has a zero dimension",
                    self.input.height, self.input.width, self.input.channels
                ),
            });
        }
        let mut shape = Shape::Tensor {
            h: self.input.height,
            w: self.input.width,
            c: self.input.channels,
        };
        for (i, layer) in self.layers.iter().enumerate() {
            let kind = layer.kind_name();
            shape = match (layer, shape) {
                (
                    Layer::Conv {
                        out_c,
                        in_c,
                        kh,
                        kw,
                        weights,
                        bias,
                    },
                    Shape::Tensor { h, w, c },
                ) => {
                    if *in_c != c {
                        return Err(mismatch(
                            i,
                            kind,
                            format!("expects {in_c} input channels, previous layer provides {c}"),
                        ));
                    }
                    if *kh > h || *kw > w || *kh == 0 || *kw == 0 {
                        return Err(mismatch(
                            i,
                            kind,
                            format!("kernel {kh}x{kw} does not fit {h}x{w} input"),
                        ));
                    }
                    let expected = (*out_c * *in_c * *kh * *kw) as usize;
                    if weights.len() != expected || bias.len() != *out_c as usize || *out_c == 0 {
                        return Err(mismatch(
                            i,
                            kind,
                            format!(
                                "parameter count mismatch: {} weights / {} bias for dims [{out_c}, {in_c}, {kh}, {kw}]",
                                weights.len(),
                                bias.len()
                            ),
                        ));
                    }
                    Shape::Tensor {
                        h: h - kh + 1,
                        w: w - kw + 1,
                        c: *out_c,
                    }
                }
                (Layer::MaxPool, Shape::Tensor { h, w, c }) => {
                    if h < 2 || w < 2 {
                        return Err(mismatch(
                            i,
                            kind,
                            format!("2x2 pooling needs at least a 2x2 input, got {h}x{w}"),
                        ));
                    }
                    Shape::Tensor {
                        h: h / 2,
                        w: w / 2,
                        c,
                    }
                }
                (Layer::Relu, s) => s,
                (Layer::Flatten, Shape::Tensor { h, w, c }) => {
                    Shape::Vector(h as usize * w as usize * c as usize)
                }
                (
                    Layer::Dense {
                        out,
                        input,
                        weights,
                        bias,
                    },
                    Shape::Vector(n),
                ) => {
                    if *input as usize != n {
                        return Err(mismatch(
                            i,
                            kind,
                            format!("expects {input} inputs, previous layer provides {n}"),
                        ));
                    }
                    if weights.len() != (*out * *input) as usize
                        || bias.len() != *out as usize
                        || *out == 0
                    {
                        return Err(mismatch(
                            i,
                            kind,
                            format!(
                                "parameter count mismatch: {} weights / {} bias for dims [{out}, {input}]",
                                weights.len(),
                                bias.len()
                            ),
                        ));
                    }
                    Shape::Vector(*out as usize)
                }
                (Layer::Softmax, Shape::Vector(n)) => Shape::Vector(n),
                (_, Shape::Vector(_)) => {
                    return Err(mismatch(i, kind, "expects a tensor input, got a vector".into()))
                }
                (_, Shape::Tensor { h, w, c }) => {
                    return Err(mismatch(
                        i,
                        kind,
                        format!("expects a vector input, got a {h}x{w}x{c} tensor"),
                    ))
                }
            };
        }
        Ok(shape)
    }
}

/// Runs the forward pass over `input` (HWC row-major, matching the declared
/// input shape) and returns the logits vector.
///
/// Convolutions are valid-padding cross-correlations plus bias; max-pooling
/// is 2x2 with stride 2 (odd trailing rows/columns dropped); ReLU clamps at
/// zero; dense layers are `W x + b`. A trailing softmax layer is a marker
/// for [`softmax`](crate::classifier::softmax) at classification time and is
/// skipped here, so the output is always pre-softmax logits.
pub fn cnn_forward(model: &ModelWeights, input: &[f32]) -> Result<Vec<f32>, ModelError> {
    let shape = model.input_shape();
    if input.len() != shape.len() {
        return Err(ModelError::InputMismatch {
            expected: shape.len(),
            got: input.len(),
        });
    }
    let mut data = input.to_vec();
    let (mut h, mut w, mut c) = (
        shape.height as usize,
        shape.width as usize,
        shape.channels as usize,
    );
    for layer in model.layers() {
        match layer {
            Layer::Conv {
                out_c,
                in_c,
                kh,
                kw,
                weights,
                bias,
            } => {
                let (oc, ic, kh, kw) = (*out_c as usize, *in_c as usize, *kh as usize, *kw as usize);
                let (oh, ow) = (h - kh + 1, w - kw + 1);
                let mut out = vec![0.0f32; oh * ow * oc];
                for oy in 0..oh {
                    for ox in 0..ow {
                        for o in 0..oc {
                            let mut acc = bias[o];
                            for ci in 0..ic {
                                for ky in 0..kh {
                                    for kx in 0..kw {
                                        let v = data[((oy + ky) * w + (ox + kx)) * c + ci];
                                        let wt = weights[((o * ic + ci) * kh + ky) * kw + kx];
                                        acc += v * wt;
                                    }
                                }
                            }
                            out[(oy * ow + ox) * oc + o] = acc;
                        }
                    }
                }
                data = out;
                (h, w, c) = (oh, ow, oc);
            }
            Layer::MaxPool => {
                let (oh, ow) = (h / 2, w / 2);
                let mut out = vec![0.0f32; oh * ow * c];
                for oy in 0..oh {
                    for ox in 0..ow {
                        for ci in 0..c {
                            let mut m = f32::NEG_INFINITY;
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    m = m.max(data[((2 * oy + dy) * w + (2 * ox + dx)) * c + ci]);
                                }
                            }
                            out[(oy * ow + ox) * c + ci] = m;
                        }
                    }
                }
                data = out;
                (h, w) = (oh, ow);
            }
            Layer::Relu => {
                for v in &mut data {
                    *v = v.max(0.0);
                }
            }
            Layer::Flatten => {
                // HWC row-major data is already flat in the declared order.
            }
            Layer::Dense {
                out,
                input,
                weights,
                bias,
            } => {
                let (o, n) = (*out as usize, *input as usize);
                let mut next = vec![0.0f32; o];
                for (r, slot) in next.iter_mut().enumerate() {
                    let mut acc = bias[r];
                    for (j, v) in data.iter().enumerate().take(n) {
                        acc += weights[r * n + j] * v;
                    }
                    *slot = acc;
                }
                data = next;
            }
            Layer::Softmax => {}
        }
    }
    Ok(data)
}

/// Numerically stable softmax: subtracts the maximum before exponentiating,
/// then normalizes. The output sums to 1 and is invariant (to floating-point
/// precision) under adding a constant to every logit.
#[must_use]
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    if logits.is_empty() {
        return Vec::new();
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|v| v / sum).collect()
}
