//! The IDX container used by MNIST: a big-endian magic number whose last
//! byte is the number of dimensions, one big-endian `u32` per dimension,
//! then the raw `u8` payload.

use std::path::Path;

use crate::data::LabeledImage;
use crate::error::{Error, IdxError, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32, IdxError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(IdxError::Truncated {
            needed: at + 4,
            found: bytes.len(),
        })
}

/// Checks the magic number and returns `(dims, payload)`.
pub fn parse_idx(bytes: &[u8], magic: u32) -> Result<(Vec<usize>, &[u8]), IdxError> {
    let found = be_u32(bytes, 0)?;
    if found != magic {
        return Err(IdxError::BadMagic { expected: magic, found });
    }
    let ndim = (magic & 0xff) as usize;
    let dims = (0..ndim)
        .map(|i| be_u32(bytes, 4 + 4 * i).map(|d| d as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let header = 4 + 4 * ndim;
    let needed = header + dims.iter().product::<usize>();
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            needed,
            found: bytes.len(),
        });
    }
    Ok((dims, &bytes[header..needed]))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Decodes an image file and a label file into labeled images, scaling
/// pixels by `1/255`.
pub fn decode_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Vec<LabeledImage>> {
    let (idims, pixels) = parse_idx(image_bytes, IMAGES_MAGIC)?;
    let (ldims, labels) = parse_idx(label_bytes, LABELS_MAGIC)?;
    if idims[0] != ldims[0] {
        return Err(IdxError::CountMismatch {
            images: idims[0],
            labels: ldims[0],
        }
        .into());
    }
    let (rows, cols) = (idims[1], idims[2]);
    let size = rows * cols;
    labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            if label > 9 {
                return Err(IdxError::BadLabel { index: i, label }.into());
            }
            let data = pixels[i * size..(i + 1) * size]
                .iter()
                .map(|&p| f64::from(p) / 255.0)
                .collect();
            Ok(LabeledImage {
                pixels: Tensor::new(vec![1, rows, cols], data)?,
                label: label as usize,
                source_index: i,
            })
        })
        .collect()
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Vec<LabeledImage>> {
    decode_idx(&read(images_path.as_ref())?, &read(labels_path.as_ref())?)
}

/// Re-encodes images as an IDX image file. Pixels are mapped back with
/// `round(p * 255)`, which inverts the loader exactly.
pub fn images_to_idx(images: &[LabeledImage]) -> Result<Vec<u8>> {
    let (rows, cols) = match images.first() {
        Some(img) => (img.pixels.shape()[1], img.pixels.shape()[2]),
        None => (0, 0),
    };
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for d in [images.len(), rows, cols] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    for img in images {
        if img.pixels.shape() != [1, rows, cols] {
            return Err(Error::shape("images_to_idx", img.pixels.shape(), &[1, rows, cols]));
        }
        out.extend(img.pixels.data().iter().map(|&p| (p * 255.0).round() as u8));
    }
    Ok(out)
}

pub fn labels_to_idx(images: &[LabeledImage]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + images.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend(images.iter().map(|img| img.label as u8));
    out
}
