//! CIFAR-10 binary batches: records of one label byte followed by 3072 pixel bytes
//! (1024 red, 1024 green, 1024 blue, each row-major 32×32).

use std::path::Path;

use super::idx::{read_file, LabelledImages};
use crate::error::{Error, ParseError, Result};

pub const SIDE: usize = 32;
pub const CHANNELS: usize = 3;
pub const RECORD: usize = 1 + SIDE * SIDE * CHANNELS;
pub const CLASSES: u8 = 10;

pub fn parse_cifar(bytes: &[u8]) -> std::result::Result<LabelledImages, ParseError> {
    if !bytes.len().is_multiple_of(RECORD) {
        let whole = bytes.len() / RECORD;
        return Err(ParseError::Truncated {
            offset: whole * RECORD,
            needed: RECORD,
            available: bytes.len() - whole * RECORD,
        });
    }
    let n = bytes.len() / RECORD;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * (RECORD - 1));
    for (i, rec) in bytes.chunks_exact(RECORD).enumerate() {
        if rec[0] >= CLASSES {
            return Err(ParseError::Invalid {
                offset: i * RECORD,
                detail: format!("label {} outside 0..{CLASSES}", rec[0]),
            });
        }
        labels.push(rec[0]);
        pixels.extend(rec[1..].iter().map(|&b| f64::from(b) / 255.0));
    }
    Ok(LabelledImages {
        rows: SIDE,
        cols: SIDE,
        channels: CHANNELS,
        pixels,
        labels,
    })
}

/// Concatenates several batch files in order.
pub fn load_batches(paths: &[&Path]) -> Result<LabelledImages> {
    let mut all = LabelledImages {
        rows: SIDE,
        cols: SIDE,
        channels: CHANNELS,
        pixels: Vec::new(),
        labels: Vec::new(),
    };
    for p in paths {
        let part = parse_cifar(&read_file(p)?).map_err(|e| Error::parse(p, e))?;
        all.pixels.extend(part.pixels);
        all.labels.extend(part.labels);
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_records() {
        let mut b = vec![3u8];
        b.extend(std::iter::repeat_n(255u8, RECORD - 1));
        b.push(9);
        b.extend(std::iter::repeat_n(0u8, RECORD - 1));
        let d = parse_cifar(&b).unwrap();
        assert_eq!(d.labels, vec![3, 9]);
        assert_eq!(d.image_len(), 3072);
        assert!(d.image(0).iter().all(|&p| p == 1.0));
        assert!(d.image(1).iter().all(|&p| p == 0.0));
    }

    #[test]
    fn partial_record() {
        let b = vec![0u8; RECORD + 10];
        assert_eq!(
            parse_cifar(&b).unwrap_err(),
            ParseError::Truncated {
                offset: RECORD,
                needed: RECORD,
                available: 10
            }
        );
    }

    #[test]
    fn bad_label() {
        let mut b = vec![0u8; 2 * RECORD];
        b[RECORD] = 10;
        assert!(matches!(parse_cifar(&b), Err(ParseError::Invalid { offset, .. }) if offset == RECORD));
    }
}
