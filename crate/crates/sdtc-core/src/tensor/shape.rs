//! Shape metadata for dense row-major tensors.

use crate::error::{Error, Result};

/// Extents of a dense tensor. Rank is at least 1 and every extent is positive,
/// so the element count is always nonzero.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Shape {
    dims: Vec<usize>,
}

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::contract("shape rank must be >= 1"));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::contract(format!(
                "shape extents must be positive, got {:?}",
                dims
            )));
        }
        Ok(Shape {
            dims: dims.to_vec(),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.dims.len()];
        for i in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.dims[i + 1];
        }
        strides
    }
}

impl std::fmt::Debug for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.dims)
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.dims)
    }
}

/// Shape of the result of broadcasting `a` against `b`.
///
/// Broadcasting aligns from the trailing axis; each pair of extents must be
/// equal or one of them must be 1.
pub fn broadcast_shape(op: &'static str, a: &Shape, b: &Shape) -> Result<Shape> {
    let ra = a.rank();
    let rb = b.rank();
    let rank = ra.max(rb);
    let mut dims = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - ra { 1 } else { a.dims()[i - (rank - ra)] };
        let db = if i < rank - rb { 1 } else { b.dims()[i - (rank - rb)] };
        if da != db && da != 1 && db != 1 {
            return Err(Error::dimension(
                op,
                format!("shapes {} and {} are not broadcast-compatible", a, b),
            ));
        }
        dims[i] = da.max(db);
    }
    Shape::new(&dims)
}
