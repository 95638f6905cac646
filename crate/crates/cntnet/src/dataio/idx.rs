//! IDX tensors as used by MNIST: a four-byte magic `00 00 <type> <ndim>`, `ndim`
//! big-endian `u32` dimensions, then the payload. Only unsigned-byte payloads
//! (type `0x08`) are supported.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, ParseError, Result};

pub const UBYTE: u8 = 0x08;
pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
const MAX_DIMS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub shape: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    pub fn magic(&self) -> u32 {
        u32::from(UBYTE) << 8 | self.shape.len() as u32
    }

    /// Pixel values divided by 255.
    pub fn to_unit(&self) -> Vec<f64> {
        self.data.iter().map(|&b| f64::from(b) / 255.0).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.magic().to_be_bytes().to_vec();
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }
}

fn take(bytes: &[u8], offset: usize, len: usize) -> std::result::Result<&[u8], ParseError> {
    bytes
        .get(offset..offset.saturating_add(len))
        .ok_or(ParseError::Truncated {
            offset: bytes.len().min(offset),
            needed: len,
            available: bytes.len().saturating_sub(offset),
        })
}

pub fn parse_idx(bytes: &[u8]) -> std::result::Result<IdxTensor, ParseError> {
    let magic = take(bytes, 0, 4)?;
    if magic[0] != 0 || magic[1] != 0 {
        return Err(ParseError::BadMagic {
            offset: 0,
            found: magic.to_vec(),
            expected: "00 00 08 <ndim>",
        });
    }
    if magic[2] != UBYTE {
        return Err(ParseError::Invalid {
            offset: 2,
            detail: format!("element type {:#04x} unsupported, only unsigned bytes (0x08)", magic[2]),
        });
    }
    let ndim = magic[3] as usize;
    if ndim == 0 || ndim > MAX_DIMS {
        return Err(ParseError::Invalid {
            offset: 3,
            detail: format!("{ndim} dimensions, expected 1..={MAX_DIMS}"),
        });
    }
    let header = take(bytes, 4, 4 * ndim)?;
    let shape: Vec<usize> = header
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let len = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or(ParseError::Invalid {
        offset: 4,
        detail: format!("dimensions {shape:?} overflow"),
    })?;
    let start = 4 + 4 * ndim;
    let data = take(bytes, start, len)?;
    if bytes.len() > start + len {
        return Err(ParseError::Invalid {
            offset: start + len,
            detail: format!("{} trailing bytes after payload", bytes.len() - start - len),
        });
    }
    Ok(IdxTensor {
        shape,
        data: data.to_vec(),
    })
}

/// Reads a file, transparently gunzipping names ending in `.gz`.
pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub fn read_idx(path: &Path) -> Result<IdxTensor> {
    parse_idx(&read_file(path)?).map_err(|e| Error::parse(path, e))
}

/// Normalized images with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledImages {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    /// `len × rows·cols·channels` values in `[0, 1]`.
    pub pixels: Vec<f64>,
    pub labels: Vec<u8>,
}

impl LabelledImages {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_len(&self) -> usize {
        self.rows * self.cols * self.channels
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let n = self.image_len();
        &self.pixels[i * n..(i + 1) * n]
    }
}

pub fn load_images(images: &Path, labels: &Path) -> Result<LabelledImages> {
    let img = read_idx(images)?;
    if img.magic() != IMAGES_MAGIC {
        return Err(Error::parse(
            images,
            ParseError::BadMagic {
                offset: 0,
                found: img.magic().to_be_bytes().to_vec(),
                expected: "00 00 08 03",
            },
        ));
    }
    let lab = read_idx(labels)?;
    if lab.magic() != LABELS_MAGIC {
        return Err(Error::parse(
            labels,
            ParseError::BadMagic {
                offset: 0,
                found: lab.magic().to_be_bytes().to_vec(),
                expected: "00 00 08 01",
            },
        ));
    }
    if img.shape[0] != lab.shape[0] {
        return Err(Error::usage(format!(
            "{} holds {} images but {} holds {} labels",
            images.display(),
            img.shape[0],
            labels.display(),
            lab.shape[0]
        )));
    }
    Ok(LabelledImages {
        rows: img.shape[1],
        cols: img.shape[2],
        channels: 1,
        pixels: img.to_unit(),
        labels: lab.data,
    })
}

const IMAGE_NAMES: [&str; 2] = ["images-idx3-ubyte", "train-images-idx3-ubyte"];
const LABEL_NAMES: [&str; 2] = ["labels-idx1-ubyte", "train-labels-idx1-ubyte"];

fn find(dir: &Path, names: &[&str]) -> Result<std::path::PathBuf> {
    names
        .iter()
        .flat_map(|n| [dir.join(n), dir.join(format!("{n}.gz"))])
        .find(|p| p.is_file())
        .ok_or_else(|| Error::usage(format!("no {} in {}", names.join(" or "), dir.display())))
}

/// Loads an MNIST-style directory: `images-idx3-ubyte` + `labels-idx1-ubyte`, or the
/// original `train-*` names, optionally gzipped.
pub fn load_dir(dir: &Path) -> Result<LabelledImages> {
    load_images(&find(dir, &IMAGE_NAMES)?, &find(dir, &LABEL_NAMES)?)
}
