//! IDX reader (the MNIST distribution format): big-endian header, magic-checked,
//! optionally gzip-compressed.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn parse_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        msg: msg.into(),
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| parse_err(offset, "truncated header"))
}

/// Returns `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(parse_err(
            0,
            format!("image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        ));
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    if count == 0 {
        return Err(parse_err(4, "image file declares 0 images"));
    }
    if rows == 0 || cols == 0 {
        return Err(parse_err(8, "image dimensions must be non-zero"));
    }
    let need = count * rows * cols;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(parse_err(
            16 + body.len(),
            format!("truncated pixel data: {} of {need} bytes", body.len()),
        ));
    }
    if body.len() > need {
        return Err(parse_err(16 + need, "trailing bytes after pixel data"));
    }
    Ok((count, rows, cols, body))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(parse_err(
            0,
            format!("label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        ));
    }
    let count = be_u32(bytes, 4)? as usize;
    if count == 0 {
        return Err(parse_err(4, "label file declares 0 labels"));
    }
    let body = &bytes[8..];
    if body.len() < count {
        return Err(parse_err(
            8 + body.len(),
            format!("truncated labels: {} of {count} bytes", body.len()),
        ));
    }
    if body.len() > count {
        return Err(parse_err(8 + count, "trailing bytes after labels"));
    }
    Ok(body)
}

/// Loads an IDX image/label pair. Pixels are scaled to `[0, 1]`; the class count is
/// `max(label) + 1`.
pub fn load_mnist_idx<F: Scalar>(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset<F>> {
    let img_bytes = read_maybe_gz(images_path.as_ref())?;
    let lbl_bytes = read_maybe_gz(labels_path.as_ref())?;
    let (count, rows, cols, pixels) = parse_idx_images(&img_bytes)?;
    let labels = parse_idx_labels(&lbl_bytes)?;
    if labels.len() != count {
        return Err(parse_err(
            4,
            format!("label count {} does not match image count {count}", labels.len()),
        ));
    }
    let scale = F::one() / F::of(255.0);
    let features = pixels.iter().map(|&p| F::of(f64::from(p)) * scale).collect();
    let labels: Vec<usize> = labels.iter().map(|&l| usize::from(l)).collect();
    let class_count = labels.iter().copied().max().unwrap_or(0) + 1;
    Dataset::new(features, rows * cols, labels, class_count.max(2))
}
