//! Dense row-major tensors of `f64`.

use alloc::vec;
use alloc::vec::Vec;

use crate::{CoreError, Result};

/// A dense row-major tensor.
///
/// The element count always equals the product of the dimensions; an empty
/// dimension list denotes a scalar holding exactly one element.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// A tensor of zeros with the given dimensions.
    pub fn zeros(dims: &[usize]) -> Tensor {
        Tensor {
            dims: dims.to_vec(),
            data: vec![0.0; dims.iter().product()],
        }
    }

    /// A tensor with every element set to `value`.
    pub fn full(dims: &[usize], value: f64) -> Tensor {
        Tensor {
            dims: dims.to_vec(),
            data: vec![value; dims.iter().product()],
        }
    }

    /// A 0-d scalar.
    pub fn scalar(value: f64) -> Tensor {
        Tensor {
            dims: Vec::new(),
            data: vec![value],
        }
    }

    /// Wraps `data` with the given dimensions, rejecting count mismatches.
    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let expect: usize = dims.iter().product();
        if data.len() != expect {
            return Err(CoreError::Shape {
                op: "from_vec",
                lhs: dims.to_vec(),
                rhs: vec![data.len()],
            });
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The value of a single-element tensor.
    ///
    /// Panics if the tensor holds more than one element; callers use it only
    /// on scalars they constructed themselves.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    /// The same data viewed under new dimensions with equal element count.
    pub fn reshape(&self, dims: &[usize]) -> Result<Tensor> {
        let expect: usize = dims.iter().product();
        if expect != self.data.len() {
            return Err(CoreError::Shape {
                op: "reshape",
                lhs: self.dims.clone(),
                rhs: dims.to_vec(),
            });
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data: self.data.clone(),
        })
    }

    /// True when every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise map into a new tensor of the same shape.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}
