//! Dense row-major tensor container.

use crate::error::{Error, Result};

/// A dense tensor of `f64` values stored row-major. 4-D activation tensors
/// use N,C,H,W order; fully-connected vectors are stored flat per batch item.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that `data` matches the shape's volume.
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let volume: usize = shape.iter().product();
        if data.len() != volume {
            return Err(Error::config(format!(
                "tensor data length {} does not match shape {:?} (volume {})",
                data.len(),
                shape,
                volume
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let volume = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; volume],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of elements per batch item (everything after the leading axis).
    pub fn item_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    /// Stacks per-item tensors of identical shape into one batched tensor
    /// with a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::config("cannot stack zero tensors"))?;
        let mut data = Vec::with_capacity(items.len() * first.len());
        for t in items {
            if t.shape() != first.shape() {
                return Err(Error::config(format!(
                    "cannot stack shapes {:?} and {:?}",
                    first.shape(),
                    t.shape()
                )));
            }
            data.extend_from_slice(t.data());
        }
        let mut shape = Vec::with_capacity(first.shape.len() + 1);
        shape.push(items.len());
        shape.extend_from_slice(&first.shape);
        Tensor::from_vec(shape, data)
    }
}
