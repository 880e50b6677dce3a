//! IDX reader and writer (the MNIST container format).
//!
//! ```text
//! offset 0   u32 BE  magic: 0x00000803 (2051) images, 0x00000801 (2049) labels
//! offset 4   u32 BE  item count
//! images:    u32 BE rows, u32 BE cols, then count*rows*cols unsigned bytes
//! labels:    count unsigned bytes
//! ```

use std::path::Path;

use super::image::Image;
use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::Length { expected: at + 4, found: bytes.len() })
}

fn check_magic(bytes: &[u8], want: u32) -> Result<()> {
    let magic = be_u32(bytes, 0)?;
    if magic != want {
        return Err(Error::Format(format!("IDX magic {magic}, expected {want}")));
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Image>> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let plane = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format(format!("IDX dimensions overflow: {rows}x{cols}")))?;
    let expected = count
        .checked_mul(plane)
        .and_then(|n| n.checked_add(16))
        .ok_or_else(|| Error::Format("IDX payload size overflows".into()))?;
    if bytes.len() < expected {
        return Err(Error::Length { expected, found: bytes.len() });
    }
    if count > 0 && plane == 0 {
        return Err(Error::Format("IDX images with zero area".into()));
    }
    bytes[16..expected]
        .chunks_exact(plane.max(1))
        .take(count)
        .map(|px| Image::new(cols, rows, 1, px.to_vec()))
        .collect()
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    check_magic(bytes, LABEL_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(Error::Length { expected, found: bytes.len() });
    }
    Ok(bytes[8..expected].iter().map(|&b| usize::from(b)).collect())
}

/// Serialize grayscale images of identical size. An empty slice needs the
/// dimensions spelled out, so it takes them explicitly.
pub fn serialize_idx_images(images: &[Image], width: usize, height: usize) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + images.len() * width * height);
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(height as u32).to_be_bytes());
    out.extend_from_slice(&(width as u32).to_be_bytes());
    for img in images {
        if img.dims() != (width, height, 1) {
            return Err(Error::shape(format!(
                "IDX images must be {width}x{height}x1, got {:?}",
                img.dims()
            )));
        }
        out.extend_from_slice(img.data());
    }
    Ok(out)
}

pub fn serialize_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        let b = u8::try_from(l).map_err(|_| Error::Data(format!("label {l} does not fit in a byte")))?;
        out.push(b);
    }
    Ok(out)
}

pub fn read_idx_images(path: impl AsRef<Path>) -> Result<Vec<Image>> {
    let bytes = std::fs::read(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    parse_idx_images(&bytes)
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let bytes = std::fs::read(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    parse_idx_labels(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-assembled IDX bytes, written out field by field.
    fn oracle_image_file(count: u32, rows: u32, cols: u32, payload: &[u8]) -> Vec<u8> {
        let mut v = vec![0x00, 0x00, 0x08, 0x03];
        for x in [count, rows, cols] {
            v.push((x >> 24) as u8);
            v.push((x >> 16) as u8);
            v.push((x >> 8) as u8);
            v.push(x as u8);
        }
        v.extend_from_slice(payload);
        v
    }

    #[test]
    fn two_mnist_images() {
        let payload: Vec<u8> = (0..1568).map(|i| (i % 251) as u8).collect();
        let bytes = oracle_image_file(2, 28, 28, &payload);
        // the first 16 bytes of train-images-idx3-ubyte for a 2-image file
        assert_eq!(&bytes[..8], &[0, 0, 8, 3, 0, 0, 0, 2]);
        let imgs = parse_idx_images(&bytes).unwrap();
        assert_eq!(imgs.len(), 2);
        assert_eq!(imgs[0].dims(), (28, 28, 1));
        assert_eq!(imgs[1].data(), &payload[784..]);
    }

    #[test]
    fn label_magic_in_image_parser_is_format_error() {
        let mut bytes = oracle_image_file(0, 28, 28, &[]);
        bytes[3] = 0x01;
        assert!(matches!(parse_idx_images(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn empty_image_file() {
        let bytes = oracle_image_file(0, 28, 28, &[]);
        assert!(parse_idx_images(&bytes).unwrap().is_empty());
    }

    #[test]
    fn truncated_payload_is_length_error() {
        let bytes = oracle_image_file(2, 28, 28, &[0; 1000]);
        assert!(matches!(parse_idx_images(&bytes), Err(Error::Length { expected: 1584, found: 1016 })));
        assert!(matches!(parse_idx_images(&[0, 0, 8]), Err(Error::Length { .. })));
    }

    #[test]
    fn labels() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 3, 7, 0, 9];
        assert_eq!(parse_idx_labels(&bytes).unwrap(), vec![7, 0, 9]);
        assert_eq!(parse_idx_labels(&[0, 0, 8, 1, 0, 0, 0, 0]).unwrap(), Vec::<usize>::new());
        assert!(matches!(parse_idx_labels(&[0, 0, 8, 3, 0, 0, 0, 0]), Err(Error::Format(_))));
        assert!(matches!(parse_idx_labels(&[0, 0, 8, 1, 0, 0, 0, 4, 1]), Err(Error::Length { .. })));
    }

    #[test]
    fn serializer_matches_oracle() {
        let imgs = vec![Image::new(3, 2, 1, vec![1, 2, 3, 4, 5, 6]).unwrap()];
        assert_eq!(serialize_idx_images(&imgs, 3, 2).unwrap(), oracle_image_file(1, 2, 3, &[1, 2, 3, 4, 5, 6]));
        assert_eq!(serialize_idx_labels(&[7, 0, 9]).unwrap(), vec![0, 0, 8, 1, 0, 0, 0, 3, 7, 0, 9]);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn image_round_trip(w in 1usize..9, h in 1usize..9, n in 0usize..6, seed in any::<u64>()) {
                let mut state = seed;
                let imgs: Vec<Image> = (0..n).map(|_| {
                    let data = (0..w * h).map(|_| {
                        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        (state >> 56) as u8
                    }).collect();
                    Image::new(w, h, 1, data).unwrap()
                }).collect();
                let bytes = serialize_idx_images(&imgs, w, h).unwrap();
                let back = parse_idx_images(&bytes).unwrap();
                prop_assert_eq!(&back, &imgs);
                prop_assert_eq!(serialize_idx_images(&back, w, h).unwrap(), bytes);
            }

            #[test]
            fn label_round_trip(labels in proptest::collection::vec(0usize..256, 0..50)) {
                let bytes = serialize_idx_labels(&labels).unwrap();
                prop_assert_eq!(parse_idx_labels(&bytes).unwrap(), labels);
            }
        }
    }
}
