//! Big-endian IDX files (the MNIST distribution format), unsigned-byte payloads only.

use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

const MAGIC_LABELS: u32 = 0x0000_0801;
const MAGIC_IMAGES: u32 = 0x0000_0803;

/// Training images, training labels, test images, test labels.
pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

#[derive(Debug, Clone, PartialEq)]
pub enum IdxData {
    /// `n × (rows·cols)`, bytes scaled by 1/255.
    Images { x: Matrix, height: usize, width: usize },
    Labels(Vec<usize>),
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format_at_byte(offset, "truncated header"))
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    let magic = read_u32(bytes, 0)?;
    let ndim = match magic {
        MAGIC_LABELS => 1,
        MAGIC_IMAGES => 3,
        other => return Err(Error::format_at_byte(0, format!("unsupported magic 0x{other:08x}"))),
    };
    let dims = (0..ndim)
        .map(|k| read_u32(bytes, 4 + 4 * k).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * ndim;
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format_at_byte(4, "dimension product overflows"))?;
    let available = bytes.len() - start;
    if available < len {
        return Err(Error::format_at_byte(
            bytes.len(),
            format!("truncated payload: expected {len} bytes after header, found {available}"),
        ));
    }
    if available > len {
        return Err(Error::format_at_byte(start + len, format!("{} trailing bytes", available - len)));
    }
    let payload = &bytes[start..];
    Ok(if ndim == 1 {
        IdxData::Labels(payload.iter().map(|&b| b as usize).collect())
    } else {
        let (height, width) = (dims[1], dims[2]);
        let x = Matrix::new(dims[0], height * width, payload.iter().map(|&b| b as f64 / 255.0).collect())?;
        IdxData::Images { x, height, width }
    })
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<IdxData> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes)
}

fn load_pair(images: &Path, labels: &Path) -> Result<LabeledDataset> {
    let IdxData::Images { x, .. } = load_idx(images)? else {
        return Err(Error::Format {
            location: images.display().to_string(),
            message: "expected an image file".into(),
        });
    };
    let IdxData::Labels(y) = load_idx(labels)? else {
        return Err(Error::Format {
            location: labels.display().to_string(),
            message: "expected a label file".into(),
        });
    };
    LabeledDataset::new(x, y, 10)
}

/// Loads the standard 60k/10k split from `dir`; `None` when any file is missing.
pub fn load_mnist(dir: impl AsRef<Path>) -> Result<Option<(LabeledDataset, LabeledDataset)>> {
    let dir = dir.as_ref();
    let paths: Vec<_> = MNIST_FILES.iter().map(|f| dir.join(f)).collect();
    if !paths.iter().all(|p| p.is_file()) {
        return Ok(None);
    }
    let train = load_pair(&paths[0], &paths[1])?;
    let test = load_pair(&paths[2], &paths[3])?;
    Ok(Some((train, test)))
}
