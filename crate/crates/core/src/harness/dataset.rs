//! IDX image/label files.

use std::path::Path;

use thiserror::Error;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DatasetError {
    #[error("{what}: bad magic {found:#010x}, expected {expected:#010x}")]
    BadMagic { what: &'static str, expected: u32, found: u32 },
    #[error("count mismatch: {0}")]
    CountMismatch(String),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

/// Unit-scaled grayscale images with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: usize,
    pub cols: usize,
    pixels: Vec<f32>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(rows: usize, cols: usize, pixels: Vec<f32>, labels: Vec<u8>) -> Result<Self, DatasetError> {
        if pixels.len() != rows * cols * labels.len() {
            return Err(DatasetError::CountMismatch(format!(
                "{} pixels for {} images of {rows}x{cols}",
                pixels.len(),
                labels.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            pixels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }

    /// First `n` samples (all if `n` is 0 or too large).
    pub fn truncated(mut self, n: usize) -> Self {
        if n > 0 && n < self.len() {
            self.labels.truncate(n);
            self.pixels.truncate(n * self.rows * self.cols);
        }
        self
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes.get(at..at + 4).map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

/// Parses an IDX3 image file; returns `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f32>), DatasetError> {
    let magic = be_u32(bytes, 0).unwrap_or(0);
    if magic != IMAGES_MAGIC {
        return Err(DatasetError::BadMagic {
            what: "images",
            expected: IMAGES_MAGIC,
            found: magic,
        });
    }
    let header = |at| be_u32(bytes, at).ok_or_else(|| DatasetError::CountMismatch("truncated image header".into()));
    let (n, r, c) = (header(4)? as usize, header(8)? as usize, header(12)? as usize);
    let body = &bytes[16..];
    if body.len() != n * r * c {
        return Err(DatasetError::CountMismatch(format!(
            "header declares {n} images of {r}x{c} ({} bytes), file has {}",
            n * r * c,
            body.len()
        )));
    }
    Ok((n, r, c, body.iter().map(|&b| b as f32 / 255.0).collect()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, DatasetError> {
    let magic = be_u32(bytes, 0).unwrap_or(0);
    if magic != LABELS_MAGIC {
        return Err(DatasetError::BadMagic {
            what: "labels",
            expected: LABELS_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(bytes, 4).ok_or_else(|| DatasetError::CountMismatch("truncated label header".into()))? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(DatasetError::CountMismatch(format!(
            "header declares {n} labels, file has {}",
            body.len()
        )));
    }
    Ok(body.to_vec())
}

fn read(path: &Path) -> Result<Vec<u8>, DatasetError> {
    std::fs::read(path).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

/// Loads matching image and label files.
pub fn load_idx_dataset(images: &Path, labels: &Path) -> Result<Dataset, DatasetError> {
    let (n, rows, cols, pixels) = parse_idx_images(&read(images)?)?;
    let labels = parse_idx_labels(&read(labels)?)?;
    if labels.len() != n {
        return Err(DatasetError::CountMismatch(format!("{n} images but {} labels", labels.len())));
    }
    Dataset::new(rows, cols, pixels, labels)
}

/// Encodes images (unit-scaled, rounded to bytes) as IDX3.
pub fn encode_idx_images(n: usize, rows: usize, cols: usize, pixels: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(pixels.iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binary::Binary;
    use crate::mapper::InputBinarization;

    #[test]
    fn round_trip_and_errors() {
        let px: Vec<f32> = (0..2 * 3 * 4).map(|i| (i * 10) as f32 / 255.0).collect();
        let img = encode_idx_images(2, 3, 4, &px);
        let (n, r, c, back) = parse_idx_images(&img).unwrap();
        assert_eq!((n, r, c), (2, 3, 4));
        assert!(back.iter().zip(&px).all(|(a, b)| (a - b).abs() < 1e-6));
        let lab = encode_idx_labels(&[3, 7]);
        assert_eq!(parse_idx_labels(&lab).unwrap(), vec![3, 7]);

        assert!(matches!(parse_idx_images(&lab), Err(DatasetError::BadMagic { .. })));
        assert!(matches!(parse_idx_labels(&img), Err(DatasetError::BadMagic { .. })));
        assert!(matches!(parse_idx_images(&img[..img.len() - 1]), Err(DatasetError::CountMismatch(_))));
        assert!(matches!(parse_idx_images(&img[..10]), Err(DatasetError::CountMismatch(_))));
        assert!(matches!(parse_idx_images(&img[..2]), Err(DatasetError::BadMagic { .. })));
        assert!(matches!(parse_idx_labels(&lab[..9]), Err(DatasetError::CountMismatch(_))));
        assert!(Dataset::new(3, 4, back, vec![1]).is_err());
    }

    #[test]
    fn binarization_endpoints() {
        let rule = InputBinarization::default();
        assert_eq!(rule.apply(&[0.0, 1.0], 2, 1), vec![Binary::Neg, Binary::Pos]);
    }
}
