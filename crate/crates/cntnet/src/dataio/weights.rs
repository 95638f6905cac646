//! The weight-file format.
//!
//! ```text
//! "CNTW" | u32 LE manifest length | JSON manifest | f32 LE blob
//! ```
//!
//! The blob stores every layer in order, each tensor row-major with the source
//! neuron as row: dense `weights [in, out]` then `bias [out]`; convolution
//! `kernel [k, k]` then `bias [1]`; recurrent `w_xh [d, h]`, `w_hh [h, h]`, `bias [h]`.
//! Tensor offsets in the manifest are byte offsets into the blob.

use std::path::Path;

use cntnet_core::{ActivationKind, Layer, LayerKind, LayerParams, LayerSpec, Matrix, NetworkSpec};
use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseError, Result};

pub const MAGIC: &[u8; 4] = b"CNTW";
pub const FORMAT_VERSION: &str = "1.0";
pub const PRECISION: &str = "f32le";
const HEADER: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: String,
    pub precision: String,
    pub layers: Vec<LayerEntry>,
    pub blob_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub kind: KindEntry,
    pub activation: String,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KindEntry {
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
    Conv2d {
        height: usize,
        width: usize,
        kernel: usize,
        stride: usize,
    },
    Recurrent {
        input_dim: usize,
        hidden_dim: usize,
        horizon: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub role: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl From<LayerKind> for KindEntry {
    fn from(k: LayerKind) -> Self {
        match k {
            LayerKind::Dense { in_dim, out_dim } => KindEntry::Dense { in_dim, out_dim },
            LayerKind::Conv2D {
                height,
                width,
                kernel,
                stride,
            } => KindEntry::Conv2d {
                height,
                width,
                kernel,
                stride,
            },
            LayerKind::Recurrent {
                input_dim,
                hidden_dim,
                horizon,
            } => KindEntry::Recurrent {
                input_dim,
                hidden_dim,
                horizon,
            },
        }
    }
}

impl From<KindEntry> for LayerKind {
    fn from(k: KindEntry) -> Self {
        match k {
            KindEntry::Dense { in_dim, out_dim } => LayerKind::Dense { in_dim, out_dim },
            KindEntry::Conv2d {
                height,
                width,
                kernel,
                stride,
            } => LayerKind::Conv2D {
                height,
                width,
                kernel,
                stride,
            },
            KindEntry::Recurrent {
                input_dim,
                hidden_dim,
                horizon,
            } => LayerKind::Recurrent {
                input_dim,
                hidden_dim,
                horizon,
            },
        }
    }
}

/// Tensor roles and shapes a layer kind stores, in blob order.
fn expected_tensors(kind: KindEntry) -> Vec<(&'static str, Vec<usize>)> {
    match kind {
        KindEntry::Dense { in_dim, out_dim } => vec![("weights", vec![in_dim, out_dim]), ("bias", vec![out_dim])],
        KindEntry::Conv2d { kernel, .. } => vec![("kernel", vec![kernel, kernel]), ("bias", vec![1])],
        KindEntry::Recurrent {
            input_dim,
            hidden_dim,
            ..
        } => vec![
            ("w_xh", vec![input_dim, hidden_dim]),
            ("w_hh", vec![hidden_dim, hidden_dim]),
            ("bias", vec![hidden_dim]),
        ],
    }
}

/// Parsed manifest plus raw blob.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFile {
    pub manifest: Manifest,
    pub blob: Vec<u8>,
}

fn tensors_of(params: &LayerParams) -> Vec<Vec<f64>> {
    match params {
        LayerParams::Dense { weights, bias } => vec![weights.as_slice().to_vec(), bias.clone()],
        LayerParams::Conv2D { kernel, bias } => vec![kernel.as_slice().to_vec(), vec![*bias]],
        LayerParams::Recurrent { w_xh, w_hh, bias } => {
            vec![w_xh.as_slice().to_vec(), w_hh.as_slice().to_vec(), bias.clone()]
        }
    }
}

impl WeightFile {
    /// Stores a valid network at 32-bit precision.
    pub fn from_spec(spec: &NetworkSpec) -> Result<Self> {
        spec.check()?;
        let mut layers = Vec::with_capacity(spec.len());
        let mut blob = Vec::new();
        for layer in &spec.layers {
            let kind = KindEntry::from(layer.spec.kind);
            let mut tensors = Vec::new();
            for ((role, shape), values) in expected_tensors(kind).into_iter().zip(tensors_of(&layer.params)) {
                tensors.push(TensorEntry {
                    role: role.to_string(),
                    shape,
                    offset: blob.len(),
                });
                for v in values {
                    blob.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            layers.push(LayerEntry {
                kind,
                activation: layer.spec.activation.name().to_string(),
                tensors,
            });
        }
        Ok(WeightFile {
            manifest: Manifest {
                format_version: FORMAT_VERSION.to_string(),
                precision: PRECISION.to_string(),
                layers,
                blob_bytes: blob.len(),
            },
            blob,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = serde_json::to_vec(&self.manifest).expect("manifest serializes");
        let mut out = Vec::with_capacity(HEADER + manifest.len() + self.blob.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(&manifest);
        out.extend_from_slice(&self.blob);
        out
    }

    /// Splits and checks the container; tensor layout is checked by [`WeightFile::to_spec`].
    pub fn parse(bytes: &[u8]) -> std::result::Result<Self, ParseError> {
        let head = bytes.get(..HEADER).ok_or(ParseError::Truncated {
            offset: 0,
            needed: HEADER,
            available: bytes.len(),
        })?;
        if &head[..4] != MAGIC {
            return Err(ParseError::BadMagic {
                offset: 0,
                found: head[..4].to_vec(),
                expected: "CNTW",
            });
        }
        let len = u32::from_le_bytes([head[4], head[5], head[6], head[7]]) as usize;
        let manifest_bytes = bytes.get(HEADER..HEADER.saturating_add(len)).ok_or(ParseError::Truncated {
            offset: HEADER,
            needed: len,
            available: bytes.len() - HEADER,
        })?;
        let manifest: Manifest =
            serde_json::from_slice(manifest_bytes).map_err(|e| ParseError::Manifest(e.to_string()))?;
        let major = manifest.format_version.split('.').next().unwrap_or_default();
        if major != FORMAT_VERSION.split('.').next().unwrap_or_default() {
            return Err(ParseError::Version(manifest.format_version));
        }
        if manifest.precision != PRECISION {
            return Err(ParseError::Manifest(format!(
                "precision `{}` unsupported, expected `{PRECISION}`",
                manifest.precision
            )));
        }
        let blob = &bytes[HEADER + len..];
        if blob.len() != manifest.blob_bytes {
            return Err(ParseError::LengthMismatch {
                declared: manifest.blob_bytes,
                found: blob.len(),
            });
        }
        Ok(WeightFile {
            manifest,
            blob: blob.to_vec(),
        })
    }

    /// Rebuilds the network, checking every tensor entry against its layer kind and
    /// the blob, then validating the result.
    pub fn to_spec(&self) -> std::result::Result<NetworkSpec, ParseError> {
        let mut cursor = 0usize;
        let mut layers = Vec::with_capacity(self.manifest.layers.len());
        for (i, entry) in self.manifest.layers.iter().enumerate() {
            let activation: ActivationKind = entry
                .activation
                .parse()
                .map_err(|_| ParseError::Manifest(format!("layer {i}: unknown activation `{}`", entry.activation)))?;
            let expected = expected_tensors(entry.kind);
            if expected.len() != entry.tensors.len() {
                return Err(ParseError::Manifest(format!(
                    "layer {i}: {} tensors listed, {} expected",
                    entry.tensors.len(),
                    expected.len()
                )));
            }
            let mut values = Vec::with_capacity(expected.len());
            for ((role, shape), t) in expected.iter().zip(&entry.tensors) {
                if t.role != *role || t.shape != *shape {
                    return Err(ParseError::Manifest(format!(
                        "layer {i}: tensor `{}` {:?}, expected `{role}` {shape:?}",
                        t.role, t.shape
                    )));
                }
                if t.offset != cursor {
                    return Err(ParseError::Manifest(format!(
                        "layer {i}: tensor `{role}` at byte {}, expected {cursor}",
                        t.offset
                    )));
                }
                let bytes = shape
                    .iter()
                    .try_fold(4usize, |acc, &d| acc.checked_mul(d))
                    .ok_or_else(|| ParseError::Manifest(format!("layer {i}: tensor `{role}` size overflows")))?;
                let end = cursor.checked_add(bytes).filter(|&e| e <= self.blob.len()).ok_or(
                    ParseError::LengthMismatch {
                        declared: cursor.saturating_add(bytes),
                        found: self.blob.len(),
                    },
                )?;
                values.push(
                    self.blob[cursor..end]
                        .chunks_exact(4)
                        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                        .collect::<Vec<f64>>(),
                );
                cursor = end;
            }
            let kind = LayerKind::from(entry.kind);
            let params = build_params(kind, values);
            layers.push(Layer {
                spec: LayerSpec { kind, activation },
                params,
            });
        }
        if cursor != self.blob.len() {
            return Err(ParseError::LengthMismatch {
                declared: cursor,
                found: self.blob.len(),
            });
        }
        let spec = NetworkSpec::new(layers);
        let violations = spec.validate();
        if violations.is_empty() {
            Ok(spec)
        } else {
            Err(ParseError::Violations(violations))
        }
    }
}

fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Matrix {
    Matrix::new(rows, cols, data).expect("tensor length checked against shape")
}

fn build_params(kind: LayerKind, mut values: Vec<Vec<f64>>) -> LayerParams {
    match kind {
        LayerKind::Dense { in_dim, out_dim } => {
            let bias = values.pop().unwrap_or_default();
            LayerParams::Dense {
                weights: matrix(in_dim, out_dim, values.pop().unwrap_or_default()),
                bias,
            }
        }
        LayerKind::Conv2D { kernel, .. } => {
            let bias = values.pop().unwrap_or_default()[0];
            LayerParams::Conv2D {
                kernel: matrix(kernel, kernel, values.pop().unwrap_or_default()),
                bias,
            }
        }
        LayerKind::Recurrent {
            input_dim,
            hidden_dim,
            ..
        } => {
            let bias = values.pop().unwrap_or_default();
            let w_hh = matrix(hidden_dim, hidden_dim, values.pop().unwrap_or_default());
            LayerParams::Recurrent {
                w_xh: matrix(input_dim, hidden_dim, values.pop().unwrap_or_default()),
                w_hh,
                bias,
            }
        }
    }
}

pub fn write_weights(spec: &NetworkSpec) -> Result<Vec<u8>> {
    Ok(WeightFile::from_spec(spec)?.to_bytes())
}

pub fn read_weights(bytes: &[u8]) -> std::result::Result<NetworkSpec, ParseError> {
    WeightFile::parse(bytes)?.to_spec()
}

pub fn save(path: &Path, spec: &NetworkSpec) -> Result<()> {
    std::fs::write(path, write_weights(spec)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<NetworkSpec> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_weights(&bytes).map_err(|e| Error::parse(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use cntnet_core::train::init_gaussian;

    fn fc3() -> NetworkSpec {
        init_gaussian(
            &[
                LayerSpec::dense(5, 4, ActivationKind::Relu),
                LayerSpec::dense(4, 3, ActivationKind::Sigmoid),
                LayerSpec::dense(3, 2, ActivationKind::Softmax),
            ],
            0.5,
            11,
        )
        .unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = write_weights(&fc3()).unwrap();
        assert_eq!(&bytes[..4], b"CNTW");
        let len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let params = 5 * 4 + 4 + 4 * 3 + 3 + 3 * 2 + 2;
        assert_eq!(bytes.len(), 8 + len + 4 * params);
    }

    #[test]
    fn offsets_are_contiguous() {
        let wf = WeightFile::from_spec(&fc3()).unwrap();
        let offsets: Vec<usize> = wf.manifest.layers.iter().flat_map(|l| l.tensors.iter().map(|t| t.offset)).collect();
        assert_eq!(offsets, vec![0, 80, 96, 144, 156, 180]);
        assert_eq!(wf.manifest.blob_bytes, 188);
    }

    #[test]
    fn round_trip_within_f32() {
        let spec = fc3();
        let back = read_weights(&write_weights(&spec).unwrap()).unwrap();
        assert_eq!(back.architecture(), spec.architecture());
        for (a, b) in spec.layers.iter().zip(&back.layers) {
            let (LayerParams::Dense { weights: wa, bias: ba }, LayerParams::Dense { weights: wb, bias: bb }) =
                (&a.params, &b.params)
            else {
                unreachable!()
            };
            for (x, y) in wa.as_slice().iter().chain(ba).zip(wb.as_slice().iter().chain(bb)) {
                assert_eq!(*y, f64::from(*x as f32));
            }
        }
    }

    #[test]
    fn idempotent() {
        let once = write_weights(&fc3()).unwrap();
        let twice = write_weights(&read_weights(&once).unwrap()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn conv_and_recurrent_round_trip() {
        let spec = init_gaussian(
            &[
                LayerSpec::conv2d(4, 4, 2, 2, ActivationKind::Relu),
                LayerSpec::recurrent(2, 3, 2, ActivationKind::Sigmoid),
            ],
            1.0,
            3,
        )
        .unwrap();
        let bytes = write_weights(&spec).unwrap();
        let back = read_weights(&bytes).unwrap();
        assert_eq!(back.architecture(), spec.architecture());
        assert_eq!(write_weights(&back).unwrap(), bytes);
    }

    #[test]
    fn truncated_blob() {
        let mut bytes = write_weights(&fc3()).unwrap();
        bytes.truncate(bytes.len() - 4);
        assert_eq!(
            read_weights(&bytes).unwrap_err(),
            ParseError::LengthMismatch {
                declared: 188,
                found: 184
            }
        );
    }

    #[test]
    fn unknown_major_version() {
        let mut wf = WeightFile::from_spec(&fc3()).unwrap();
        wf.manifest.format_version = "2.0".into();
        assert_eq!(read_weights(&wf.to_bytes()).unwrap_err(), ParseError::Version("2.0".into()));
        wf.manifest.format_version = "1.7".into();
        assert!(read_weights(&wf.to_bytes()).is_ok());
    }

    #[test]
    fn hidden_softmax_is_a_violation() {
        let mut wf = WeightFile::from_spec(&fc3()).unwrap();
        wf.manifest.layers[0].activation = "softmax".into();
        match read_weights(&wf.to_bytes()).unwrap_err() {
            ParseError::Violations(v) => assert_eq!(v[0].layer, 0),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn shape_disagreeing_with_kind() {
        let mut wf = WeightFile::from_spec(&fc3()).unwrap();
        wf.manifest.layers[1].tensors[0].shape = vec![3, 4];
        assert!(matches!(read_weights(&wf.to_bytes()), Err(ParseError::Manifest(_))));
    }
}
