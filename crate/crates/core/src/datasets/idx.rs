//! Reader for the big-endian IDX format used by MNIST and Fashion-MNIST.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::Tensor;

use super::ImageDataset;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Raw IDX payload: dimension extents and unsigned bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn idx_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Idx { path: path.to_path_buf(), reason: reason.into() }
}

/// Parse an unsigned-byte IDX buffer whose header must carry `magic`.
pub fn parse_idx(bytes: &[u8], magic: u32, path: &Path) -> Result<IdxArray> {
    let word = |i: usize| -> Result<u32> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| idx_err(path, "truncated header"))
    };
    let found = word(0)?;
    if found != magic {
        return Err(idx_err(path, format!("bad magic 0x{found:08x}, expected 0x{magic:08x}")));
    }
    let ndim = (magic & 0xff) as usize;
    let dims = (0..ndim).map(|i| word(i + 1).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let header = 4 * (ndim + 1);
    let expected: usize = dims.iter().product();
    let payload = &bytes[header.min(bytes.len())..];
    if payload.len() < expected {
        return Err(idx_err(path, format!("truncated payload: {} of {expected} bytes", payload.len())));
    }
    if payload.len() > expected {
        return Err(idx_err(path, format!("{} trailing bytes", payload.len() - expected)));
    }
    Ok(IdxArray { dims, data: payload.to_vec() })
}

pub fn read_idx(path: &Path, magic: u32) -> Result<IdxArray> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes, magic, path)
}

/// Load an image file and its label file; pixels are scaled to `[0, 1]`.
pub fn read_idx_dataset(images: &Path, labels: &Path, source: &str) -> Result<ImageDataset> {
    let img = read_idx(images, IMAGE_MAGIC)?;
    let lab = read_idx(labels, LABEL_MAGIC)?;
    let (n, rows, cols) = (img.dims[0], img.dims[1], img.dims[2]);
    if lab.dims[0] != n {
        return Err(idx_err(labels, format!("{} labels for {n} images", lab.dims[0])));
    }
    let pixels = img.data.iter().map(|&b| f64::from(b) / 255.0).collect();
    ImageDataset::new(Tensor::from_rows(n, rows * cols, pixels)?, lab.data, source)
}

/// Load every `{train,t10k}-{images-idx3,labels-idx1}-ubyte` pair found in
/// `dir` and concatenate them (train first).
pub fn load_idx_dir(dir: &Path, source: &str) -> Result<ImageDataset> {
    let mut parts = Vec::new();
    for prefix in ["train", "t10k"] {
        let images = dir.join(format!("{prefix}-images-idx3-ubyte"));
        let labels = dir.join(format!("{prefix}-labels-idx1-ubyte"));
        if images.exists() && labels.exists() {
            parts.push(read_idx_dataset(&images, &labels, source)?);
        }
    }
    if parts.is_empty() {
        return Err(Error::Data(format!("no IDX image/label pairs in {}", dir.display())));
    }
    ImageDataset::concat(parts)
}

#[cfg(test)]
pub(crate) fn encode_idx(magic: u32, dims: &[u32], data: &[u8]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for d in dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(data);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_images_and_scales_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let mut pixels = vec![0u8; 10 * 28 * 28];
        pixels[0] = 255;
        pixels[1] = 51;
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        fs::write(&img, encode_idx(IMAGE_MAGIC, &[10, 28, 28], &pixels)).unwrap();
        fs::write(&lab, encode_idx(LABEL_MAGIC, &[10], &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9])).unwrap();
        let ds = read_idx_dataset(&img, &lab, "test").unwrap();
        assert_eq!(ds.len(), 10);
        assert_eq!(ds.dim(), 784);
        assert_eq!(ds.images.get(0, 0), 1.0);
        assert_eq!(ds.images.get(0, 1), 0.2);
        assert_eq!(ds.labels[9], 9);
    }

    #[test]
    fn rejects_bad_magic_truncation_and_mismatch() {
        let p = Path::new("mem");
        let good = encode_idx(IMAGE_MAGIC, &[2, 2, 2], &[0; 8]);
        assert!(parse_idx(&good, IMAGE_MAGIC, p).is_ok());
        assert!(parse_idx(&good, LABEL_MAGIC, p).is_err());
        assert!(parse_idx(&good[..good.len() - 1], IMAGE_MAGIC, p).is_err());
        assert!(parse_idx(&good[..6], IMAGE_MAGIC, p).is_err());

        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        fs::write(&img, good).unwrap();
        fs::write(&lab, encode_idx(LABEL_MAGIC, &[3], &[0, 1, 2])).unwrap();
        assert!(read_idx_dataset(&img, &lab, "t").is_err());
    }
}
