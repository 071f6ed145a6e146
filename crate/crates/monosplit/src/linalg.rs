//! Dense real vectors and the block vectors used by the product-space
//! formulation of composite problems.
//!
//! All reductions (inner products, norms) accumulate left to right with a
//! single running sum, and block vectors thread the same accumulator through
//! their blocks in declared order. This pins the floating-point result, so a
//! block vector and its flattening produce bitwise identical inner products —
//! the product-space equivalence tests rely on that.

use crate::error::{Error, Result};

/// A finite-dimensional real vector. Immutable after construction; every
/// operation returns a fresh value.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseVector {
    coords: Vec<f64>,
}

impl DenseVector {
    /// Builds a vector from its coordinates. Rejects empty and non-finite data.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidConstant(
                "vector dimension must be at least 1".into(),
            ));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConstant(
                "vector coordinates must be finite".into(),
            ));
        }
        Ok(Self { coords })
    }

    /// The zero vector of the given dimension.
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "vector dimension must be at least 1");
        Self {
            coords: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.coords.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }

    /// Left-to-right inner product with `other`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        check_dims(self.dim(), other.dim())?;
        Ok(seq_dot(&self.coords, &other.coords))
    }

    /// Euclidean norm, `sqrt(inner(self, self))`.
    pub fn norm(&self) -> f64 {
        seq_dot(&self.coords, &self.coords).sqrt()
    }

    /// Distance `‖self − other‖`.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        check_dims(self.dim(), other.dim())?;
        let mut acc = 0.0;
        for (a, b) in self.coords.iter().zip(&other.coords) {
            let d = a - b;
            acc += d * d;
        }
        Ok(acc.sqrt())
    }

    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        debug_assert!(!coords.is_empty());
        Self { coords }
    }

    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.coords.iter().map(|&c| f(c)).collect())
    }
}

impl std::ops::Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.coords[i]
    }
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, got })
    }
}

// Single accumulator, strictly left to right: no pairwise or unrolled
// reassociation, so results are reproducible bit for bit.
fn seq_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Inner product of two vectors of matching dimension.
pub fn inner(a: &DenseVector, b: &DenseVector) -> Result<f64> {
    a.inner(b)
}

/// Euclidean norm.
pub fn norm(a: &DenseVector) -> f64 {
    a.norm()
}

/// `alpha·x + y`, coordinatewise.
pub fn axpy(alpha: f64, x: &DenseVector, y: &DenseVector) -> Result<DenseVector> {
    check_dims(x.dim(), y.dim())?;
    let coords = x
        .coords
        .iter()
        .zip(&y.coords)
        .map(|(xi, yi)| alpha * xi + yi)
        .collect();
    Ok(DenseVector::from_raw(coords))
}

/// The extrapolated point `2·x_cur − x_prev` every reflected method uses.
pub fn reflect(x_cur: &DenseVector, x_prev: &DenseVector) -> Result<DenseVector> {
    check_dims(x_cur.dim(), x_prev.dim())?;
    let coords = x_cur
        .coords
        .iter()
        .zip(&x_prev.coords)
        .map(|(c, p)| 2.0 * c - p)
        .collect();
    Ok(DenseVector::from_raw(coords))
}

/// An element of a Hilbert direct sum: an ordered list of dense blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockVector {
    blocks: Vec<DenseVector>,
}

impl BlockVector {
    pub fn new(blocks: Vec<DenseVector>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidConstant(
                "block vector needs at least one block".into(),
            ));
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[DenseVector] {
        &self.blocks
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.dim()).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim()).sum()
    }

    /// Concatenates the blocks in declared order.
    pub fn flatten(&self) -> DenseVector {
        let mut coords = Vec::with_capacity(self.total_dim());
        for b in &self.blocks {
            coords.extend_from_slice(b.as_slice());
        }
        DenseVector::from_raw(coords)
    }

    /// Splits a flat vector back into blocks of the given dimensions.
    pub fn from_flat(flat: &DenseVector, dims: &[usize]) -> Result<Self> {
        let total: usize = dims.iter().sum();
        check_dims(total, flat.dim())?;
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConstant(
                "block dimensions must be positive".into(),
            ));
        }
        let mut blocks = Vec::with_capacity(dims.len());
        let mut offset = 0;
        for &d in dims {
            blocks.push(DenseVector::from_raw(
                flat.as_slice()[offset..offset + d].to_vec(),
            ));
            offset += d;
        }
        Self::new(blocks)
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.block_dims() != other.block_dims() {
            return Err(Error::ShapeMismatch {
                expected: self.total_dim(),
                got: other.total_dim(),
            });
        }
        Ok(())
    }

    /// Inner product: one accumulator threaded through all blocks in order,
    /// identical to flattening first.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_shape(other)?;
        let mut acc = 0.0;
        for (a, b) in self.blocks.iter().zip(&other.blocks) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                acc += x * y;
            }
        }
        Ok(acc)
    }

    pub fn norm(&self) -> f64 {
        let mut acc = 0.0;
        for b in &self.blocks {
            for x in b.as_slice() {
                acc += x * x;
            }
        }
        acc.sqrt()
    }

    pub fn axpy(alpha: f64, x: &Self, y: &Self) -> Result<Self> {
        x.check_shape(y)?;
        let blocks = x
            .blocks
            .iter()
            .zip(&y.blocks)
            .map(|(a, b)| axpy(alpha, a, b))
            .collect::<Result<_>>()?;
        Self::new(blocks)
    }

    pub fn reflect(x_cur: &Self, x_prev: &Self) -> Result<Self> {
        x_cur.check_shape(x_prev)?;
        let blocks = x_cur
            .blocks
            .iter()
            .zip(&x_prev.blocks)
            .map(|(c, p)| reflect(c, p))
            .collect::<Result<_>>()?;
        Self::new(blocks)
    }
}
