//! IDX image/label datasets (the MNIST container format).
//!
//! Images load as `[1, rows, cols]` tensors with pixel bytes scaled to
//! `[0, 1]` (255 → 1.0); order follows the file. Magic numbers are
//! big-endian: `0x00000803` for images (rank-3 unsigned bytes) and
//! `0x00000801` for labels.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::inject::Sample;
use crate::tensor::Tensor;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(r: &mut impl Read, path: &Path, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::Dataset(format!("{}: truncated {what}", path.display())))?;
    Ok(u32::from_be_bytes(b))
}

fn read_all(r: &mut impl Read, len: usize, path: &Path, what: &str) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Dataset(format!("{}: truncated {what}", path.display())))?;
    Ok(buf)
}

/// Loads an IDX image/label pair into labeled samples.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();

    let mut ir = std::fs::File::open(images_path)
        .map_err(|e| Error::Dataset(format!("{}: {e}", images_path.display())))?;
    let magic = read_u32_be(&mut ir, images_path, "magic")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Dataset(format!(
            "{}: image magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}",
            images_path.display()
        )));
    }
    let count = read_u32_be(&mut ir, images_path, "count")? as usize;
    let rows = read_u32_be(&mut ir, images_path, "rows")? as usize;
    let cols = read_u32_be(&mut ir, images_path, "cols")? as usize;
    let pixels = read_all(&mut ir, count * rows * cols, images_path, "pixel data")?;

    let mut lr = std::fs::File::open(labels_path)
        .map_err(|e| Error::Dataset(format!("{}: {e}", labels_path.display())))?;
    let magic = read_u32_be(&mut lr, labels_path, "magic")?;
    if magic != LABEL_MAGIC {
        return Err(Error::Dataset(format!(
            "{}: label magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}",
            labels_path.display()
        )));
    }
    let label_count = read_u32_be(&mut lr, labels_path, "count")? as usize;
    if label_count != count {
        return Err(Error::Dataset(format!(
            "{} has {count} images but {} has {label_count} labels",
            images_path.display(),
            labels_path.display()
        )));
    }
    let labels = read_all(&mut lr, count, labels_path, "label data")?;

    let item = rows * cols;
    let samples = (0..count)
        .map(|i| {
            let data: Vec<f64> = pixels[i * item..(i + 1) * item]
                .iter()
                .map(|&p| f64::from(p) / 255.0)
                .collect();
            Ok(Sample::new(
                Tensor::from_vec(vec![1, rows, cols], data)?,
                labels[i] as usize,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(samples)
}
