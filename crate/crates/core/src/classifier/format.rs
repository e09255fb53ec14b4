//! Binary codec for network weights (the SNWB container).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   4 bytes  "SNWB"
//! version u32      currently 1
//! records u32      number of records that follow
//! record  u8 kind, u8 rank, rank x u32 dims, prod(dims) x f32 params
//! ```
//!
//! Kind tags: 0 conv, 1 maxpool, 2 relu, 3 flatten, 4 dense, 5 softmax.
//! Parameterized kinds occupy two consecutive records with the same tag: a
//! weights record (conv rank 4 `[out_c, in_c, kh, kw]`, dense rank 2
//! `[out, in]`) followed by a rank-1 bias record with dims `[out]`.
//! Parameter-free kinds are a single rank-1 record with dims `[0]`.
//! Encoding is deterministic, so decode/encode round-trips byte-identically.

use std::fs;
use std::path::Path;

use super::network::{InputShape, Layer, ModelError, ModelWeights};

pub const MAGIC: [u8; 4] = *b"SNWB";
pub const VERSION: u32 = 1;

const KIND_CONV: u8 = 0;
const KIND_MAXPOOL: u8 = 1;
const KIND_RELU: u8 = 2;
const KIND_FLATTEN: u8 = 3;
const KIND_DENSE: u8 = 4;
const KIND_SOFTMAX: u8 = 5;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], ModelError> {
        if self.pos + n > self.bytes.len() {
            return Err(ModelError::Truncated(what.to_string()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self, what: &str) -> Result<u8, ModelError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32, ModelError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f32>, ModelError> {
        let b = self.take(count * 4, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

struct Record {
    kind: u8,
    dims: Vec<u32>,
    params: Vec<f32>,
}

fn read_record(cur: &mut Cursor<'_>, index: usize) -> Result<Record, ModelError> {
    let kind = cur.u8(&format!("record {index} kind"))?;
    if kind > KIND_SOFTMAX {
        return Err(ModelError::UnknownKind(kind));
    }
    let rank = cur.u8(&format!("record {index} rank"))?;
    let mut dims = Vec::with_capacity(rank as usize);
    for d in 0..rank {
        dims.push(cur.u32(&format!("record {index} dim {d}"))?);
    }
    let count = dims.iter().map(|&d| d as usize).product::<usize>();
    // A rank-0 record would have an (empty) product of 1; the format always
    // encodes parameter-free layers as rank 1 dims [0] instead.
    let count = if dims.is_empty() { 0 } else { count };
    let params = cur.f32s(count, &format!("record {index} parameters"))?;
    Ok(Record { kind, dims, params })
}

fn bias_record(
    cur: &mut Cursor<'_>,
    index: &mut u32,
    records: u32,
    kind: u8,
    kind_name: &'static str,
    out: u32,
    layer_index: usize,
) -> Result<Vec<f32>, ModelError> {
    if *index >= records {
        return Err(ModelError::Truncated(format!(
            "bias record for {kind_name} layer {layer_index}"
        )));
    }
    let rec = read_record(cur, *index as usize)?;
    *index += 1;
    if rec.kind != kind || rec.dims != [out] {
        return Err(ModelError::ShapeMismatch {
            index: layer_index,
            kind: kind_name,
            detail: format!(
                "expected a rank-1 {kind_name} bias record with dims [{out}], got kind {} dims {:?}",
                rec.kind, rec.dims
            ),
        });
    }
    Ok(rec.params)
}

/// Decodes a weights container, validating the layer chain against `input`.
pub fn decode_weights(bytes: &[u8], input: InputShape) -> Result<ModelWeights, ModelError> {
    let mut cur = Cursor::new(bytes);
    if cur.take(4, "magic").map_err(|_| ModelError::BadMagic)? != MAGIC {
        return Err(ModelError::BadMagic);
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(ModelError::UnsupportedVersion(version));
    }
    let records = cur.u32("record count")?;
    let mut layers = Vec::new();
    let mut index = 0u32;
    while index < records {
        let layer_index = layers.len();
        let rec = read_record(&mut cur, index as usize)?;
        index += 1;
        let layer = match rec.kind {
            KIND_CONV => {
                let [out_c, in_c, kh, kw] = match rec.dims[..] {
                    [a, b, c, d] => [a, b, c, d],
                    _ => {
                        return Err(ModelError::ShapeMismatch {
                            index: layer_index,
                            kind: "conv",
                            detail: format!(
                                "weights record must be rank 4, got dims {:?}",
                                rec.dims
                            ),
                        })
                    }
                };
                let bias = bias_record(
                    &mut cur,
                    &mut index,
                    records,
                    KIND_CONV,
                    "conv",
                    out_c,
                    layer_index,
                )?;
                Layer::Conv {
                    out_c,
                    in_c,
                    kh,
                    kw,
                    weights: rec.params,
                    bias,
                }
            }
            KIND_DENSE => {
                let [out, inp] = match rec.dims[..] {
                    [a, b] => [a, b],
                    _ => {
                        return Err(ModelError::ShapeMismatch {
                            index: layer_index,
                            kind: "dense",
                            detail: format!(
                                "weights record must be rank 2, got dims {:?}",
                                rec.dims
                            ),
                        })
                    }
                };
                let bias = bias_record(
                    &mut cur,
                    &mut index,
                    records,
                    KIND_DENSE,
                    "dense",
                    out,
                    layer_index,
                )?;
                Layer::Dense {
                    out,
                    input: inp,
                    weights: rec.params,
                    bias,
                }
            }
            KIND_MAXPOOL | KIND_RELU | KIND_FLATTEN | KIND_SOFTMAX => {
                if rec.dims != [0] {
                    let kind_name = match rec.kind {
                        KIND_MAXPOOL => "maxpool",
                        KIND_RELU => "relu",
                        KIND_FLATTEN => "flatten",
                        _ => "softmax",
                    };
                    return Err(ModelError::ShapeMismatch {
                        index: layer_index,
                        kind: kind_name,
                        detail: format!(
                            "parameter-free layer must have dims [0], got {:?}",
                            rec.dims
                        ),
                    });
                }
                match rec.kind {
                    KIND_MAXPOOL => Layer::MaxPool,
                    KIND_RELU => Layer::Relu,
                    KIND_FLATTEN => Layer::Flatten,
                    _ => Layer::Softmax,
                }
            }
            other => return Err(ModelError::UnknownKind(other)),
        };
        layers.push(layer);
    }
    if cur.remaining() > 0 {
        return Err(ModelError::TrailingBytes(cur.remaining()));
    }
    ModelWeights::new(layers, input)
}

/// Encodes a model into the container format. The inverse of
/// [`decode_weights`]: decoding then encoding reproduces the input bytes.
#[must_use]
pub fn encode_weights(model: &ModelWeights) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let records: u32 = model
        .layers()
        .iter()
        .map(|l| match l {
            Layer::Conv { .. } | Layer::Dense { .. } => 2u32,
            _ => 1,
        })
        .sum();
    out.extend_from_slice(&records.to_le_bytes());
    let mut record = |kind: u8, dims: &[u32], params: &[f32]| {
        out.push(kind);
        out.push(dims.len() as u8);
        for d in dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
    };
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
                record(KIND_CONV, &[*out_c, *in_c, *kh, *kw], weights);
                record(KIND_CONV, &[*out_c], bias);
            }
            Layer::Dense {
                out,
                input,
                weights,
                bias,
            } => {
                record(KIND_DENSE, &[*out, *input], weights);
                record(KIND_DENSE, &[*out], bias);
            }
            Layer::MaxPool => record(KIND_MAXPOOL, &[0], &[]),
            Layer::Relu => record(KIND_RELU, &[0], &[]),
            Layer::Flatten => record(KIND_FLATTEN, &[0], &[]),
            Layer::Softmax => record(KIND_SOFTMAX, &[0], &[]),
        }
    }
    out
}

/// Reads and decodes a weights file with the given declared input shape.
pub fn load_weights_with_input(
    path: impl AsRef<Path>,
    input: InputShape,
) -> Result<ModelWeights, ModelError> {
    let bytes = fs::read(path)?;
    decode_weights(&bytes, input)
}

/// Reads and decodes a weights file with the default 32x32x3 input shape.
pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelWeights, ModelError> {
    load_weights_with_input(path, InputShape::default())
}

/// Encodes and writes a weights file.
pub fn save_weights(model: &ModelWeights, path: impl AsRef<Path>) -> Result<(), ModelError> {
    fs::write(path, encode_weights(model))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn tiny_input() -> InputShape {
        InputShape {
            height: 6,
            width: 6,
            channels: 1,
        }
    }

    fn tiny_model() -> ModelWeights {
        ModelWeights::new(
            vec![
                Layer::Conv {
                    out_c: 2,
                    in_c: 1,
                    kh: 3,
                    kw: 3,
                    weights: (0..18).map(|v| v as f32 * 0.1).collect(),
                    bias: vec![0.5, -0.5],
                },
                Layer::Relu,
                Layer::MaxPool,
                Layer::Flatten,
                Layer::Dense {
                    out: 3,
                    input: 8,
                    weights: (0..24).map(|v| v as f32 * -0.01).collect(),
                    bias: vec![1.0, 2.0, 3.0],
                },
                Layer::Softmax,
            ],
            tiny_input(),
        )
        .unwrap()
    }

    #[test]
    fn header_is_magic_version_count() {
        let bytes = encode_weights(&tiny_model());
        assert_eq!(&bytes[0..4], b"SNWB");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        // conv + bias, relu, maxpool, flatten, dense + bias, softmax = 8 records.
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 8);
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let model = tiny_model();
        let bytes = encode_weights(&model);
        let decoded = decode_weights(&bytes, tiny_input()).unwrap();
        assert_eq!(decoded, model);
        assert_eq!(encode_weights(&decoded), bytes);
    }

    #[test]
    fn round_trip_random_models() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let input = InputShape {
                height: rng.gen_range(4..=8),
                width: rng.gen_range(4..=8),
                channels: rng.gen_range(1..=3),
            };
            let k = rng.gen_range(1..=3);
            let out_c = rng.gen_range(1..=4);
            let flat =
                (input.height - k + 1) * (input.width - k + 1) * out_c;
            let out = rng.gen_range(1..=5);
            let model = ModelWeights::new(
                vec![
                    Layer::Conv {
                        out_c,
                        in_c: input.channels,
                        kh: k,
                        kw: k,
                        weights: (0..out_c * input.channels * k * k)
                            .map(|_| rng.gen_range(-1.0..1.0))
                            .collect(),
                        bias: (0..out_c).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    },
                    Layer::Flatten,
                    Layer::Dense {
                        out,
                        input: flat,
                        weights: (0..out * flat).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                        bias: (0..out).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    },
                    Layer::Softmax,
                ],
                input,
            )
            .unwrap();
            let bytes = encode_weights(&model);
            let decoded = decode_weights(&bytes, input).unwrap();
            assert_eq!(decoded, model);
            assert_eq!(encode_weights(&decoded), bytes);
        }
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = encode_weights(&tiny_model());
        bytes[0] = b'X';
        assert!(matches!(
            decode_weights(&bytes, tiny_input()),
            Err(ModelError::BadMagic)
        ));
        assert!(matches!(
            decode_weights(b"SN", tiny_input()),
            Err(ModelError::BadMagic)
        ));
    }

    #[test]
    fn rejects_unsupported_version() {
        let mut bytes = encode_weights(&tiny_model());
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            decode_weights(&bytes, tiny_input()),
            Err(ModelError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn rejects_truncation_at_every_length() {
        let bytes = encode_weights(&tiny_model());
        for n in 4..bytes.len() {
            let err = decode_weights(&bytes[..n], tiny_input()).unwrap_err();
            assert!(
                matches!(err, ModelError::Truncated(_)),
                "truncation at {n} gave {err:?}"
            );
        }
    }

    #[test]
    fn rejects_trailing_bytes() {
        let mut bytes = encode_weights(&tiny_model());
        bytes.extend_from_slice(&[0, 1, 2]);
        assert!(matches!(
            decode_weights(&bytes, tiny_input()),
            Err(ModelError::TrailingBytes(3))
        ));
    }

    #[test]
    fn rejects_missing_bias_record() {
        // Encode a single conv weights record but declare only 1 record, so
        // the bias record is absent.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.push(KIND_CONV);
        bytes.push(4);
        for d in [1u32, 1, 1, 1] {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        let err = decode_weights(&bytes, tiny_input()).unwrap_err();
        assert!(
            matches!(&err, ModelError::Truncated(what) if what.contains("bias")),
            "got {err:?}"
        );
    }

    #[test]
    fn rejects_mismatched_bias_dims() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        // conv weights [2, 1, 1, 1]
        bytes.push(KIND_CONV);
        bytes.push(4);
        for d in [2u32, 1, 1, 1] {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        // bias with dims [3] instead of [2]
        bytes.push(KIND_CONV);
        bytes.push(1);
        bytes.extend_from_slice(&3u32.to_le_bytes());
        for _ in 0..3 {
            bytes.extend_from_slice(&0.0f32.to_le_bytes());
        }
        let err = decode_weights(&bytes, tiny_input()).unwrap_err();
        match err {
            ModelError::ShapeMismatch { index, kind, .. } => {
                assert_eq!((index, kind), (0, "conv"));
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_kind_tag() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.push(9);
        bytes.push(1);
        bytes.extend_from_slice(&0u32.to_le_bytes());
        assert!(matches!(
            decode_weights(&bytes, tiny_input()),
            Err(ModelError::UnknownKind(9))
        ));
    }

    #[test]
    fn rejects_chain_mismatch_with_layer_name() {
        // Dense declares 9 inputs but the flattened input provides 36.
        let model_bytes = {
            let mut bytes = Vec::new();
            bytes.extend_from_slice(&MAGIC);
            bytes.extend_from_slice(&VERSION.to_le_bytes());
            bytes.extend_from_slice(&3u32.to_le_bytes());
            bytes.push(KIND_FLATTEN);
            bytes.push(1);
            bytes.extend_from_slice(&0u32.to_le_bytes());
            bytes.push(KIND_DENSE);
            bytes.push(2);
            bytes.extend_from_slice(&2u32.to_le_bytes());
            bytes.extend_from_slice(&9u32.to_le_bytes());
            for _ in 0..18 {
                bytes.extend_from_slice(&0.0f32.to_le_bytes());
            }
            bytes.push(KIND_DENSE);
            bytes.push(1);
            bytes.extend_from_slice(&2u32.to_le_bytes());
            for _ in 0..2 {
                bytes.extend_from_slice(&0.0f32.to_le_bytes());
            }
            bytes
        };
        let err = decode_weights(&model_bytes, tiny_input()).unwrap_err();
        match err {
            ModelError::ShapeMismatch { index, kind, .. } => {
                assert_eq!((index, kind), (1, "dense"));
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join(format!("snwb-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.snwb");
        let model = tiny_model();
        save_weights(&model, &path).unwrap();
        let loaded = load_weights_with_input(&path, tiny_input()).unwrap();
        assert_eq!(loaded, model);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
