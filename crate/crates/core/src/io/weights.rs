//! Binary weight files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "QSCW"
//! version u32      currently 1
//! count   u32      number of tensors
//! per tensor:
//!   name_len u16, name (UTF-8), rank u8, extents u32 × rank,
//!   payload: f32 × product(extents), row-major
//! ```
//!
//! Values are stored as 32-bit floats — the interchange width of every
//! common training stack — and widened to f64 in memory, which is exact.
//! Writing narrows f64 to the nearest f32, so write-then-read is lossless
//! precisely for stores whose values are f32-representable (in particular,
//! anything previously loaded from this format).

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::WeightStore;
use crate::tensor::Tensor;

const MAGIC: [u8; 4] = *b"QSCW";
const VERSION: u32 = 1;

fn truncated(what: &str) -> Error {
    Error::Weights(format!("truncated weight file: {what}"))
}

fn read_bytes(r: &mut impl Read, len: usize, what: &str) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            truncated(what)
        } else {
            Error::Io(e)
        }
    })?;
    Ok(buf)
}

fn read_u16(r: &mut impl Read, what: &str) -> Result<u16> {
    let b = read_bytes(r, 2, what)?;
    Ok(u16::from_le_bytes([b[0], b[1]]))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let b = read_bytes(r, 4, what)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

/// Reads a weight store from any byte stream.
pub fn read_weights(reader: impl Read) -> Result<WeightStore> {
    let mut r = BufReader::new(reader);
    let magic = read_bytes(&mut r, 4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Weights(format!(
            "bad magic {magic:?}, expected \"QSCW\""
        )));
    }
    let version = read_u32(&mut r, "version")?;
    if version != VERSION {
        return Err(Error::Weights(format!(
            "unsupported weight file version {version}, expected {VERSION}"
        )));
    }
    let count = read_u32(&mut r, "tensor count")?;
    let mut store = WeightStore::new();
    for i in 0..count {
        let ctx = format!("tensor {i}");
        let name_len = read_u16(&mut r, &ctx)? as usize;
        let name_bytes = read_bytes(&mut r, name_len, &ctx)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::Weights(format!("{ctx}: name is not valid UTF-8")))?;
        let rank = read_bytes(&mut r, 1, &name)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        let mut volume = 1usize;
        for _ in 0..rank {
            let extent = read_u32(&mut r, &name)? as usize;
            volume = volume.checked_mul(extent).ok_or_else(|| {
                Error::Weights(format!("tensor {name:?}: extents overflow"))
            })?;
            shape.push(extent);
        }
        let payload = read_bytes(&mut r, volume * 4, &format!("tensor {name:?} payload"))?;
        let data: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        store.insert(name, Tensor::from_vec(shape, data)?)?;
    }
    Ok(store)
}

/// Loads a weight file.
pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightStore> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_weights(file).map_err(|e| match e {
        Error::Weights(msg) => Error::Weights(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Writes a weight store to any byte stream.
pub fn write_weights(writer: impl Write, store: &WeightStore) -> Result<()> {
    let mut w = BufWriter::new(writer);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let count = u32::try_from(store.len())
        .map_err(|_| Error::Weights("too many tensors for the file format".into()))?;
    w.write_all(&count.to_le_bytes())?;
    for (name, tensor) in store.iter() {
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::Weights(format!("tensor name {name:?} is too long")))?;
        w.write_all(&name_len.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        let rank = u8::try_from(tensor.shape().len())
            .map_err(|_| Error::Weights(format!("tensor {name:?} rank exceeds 255")))?;
        w.write_all(&[rank])?;
        for &extent in tensor.shape() {
            let extent = u32::try_from(extent)
                .map_err(|_| Error::Weights(format!("tensor {name:?} extent too large")))?;
            w.write_all(&extent.to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Saves a weight store to a file.
pub fn save_weights(path: impl AsRef<Path>, store: &WeightStore) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_weights(file, store)
}
