//! Minimal dense real-matrix kernel.
//!
//! Just the forward operations and hand-written vector-Jacobian products
//! that the relation block and contrastive loss need, plus a central
//! finite-difference checker to verify every backward pass. Double
//! precision throughout; no broadcasting — all shape mismatches are hard
//! errors.

mod check;
mod ops;

pub use check::finite_diff_check;
pub use ops::{
    add, add_vjp, concat_cols, concat_cols_vjp, l2_normalize_rows, l2_normalize_rows_vjp, matmul,
    matmul_vjp, relu, relu_vjp, scale, scale_vjp, softmax_rows, softmax_rows_vjp,
};

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("tensor dimensions must be positive")]
    EmptyShape,
    #[error("tensor entry is not finite")]
    NonFinite,
    #[error("value count {got} does not match {rows}x{cols}")]
    BadLength { rows: usize, cols: usize, got: usize },
}

/// Dense row-major matrix of finite f64 values. Immutable in spirit:
/// operations return new tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2D {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2D {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "tensor dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if rows == 0 || cols == 0 {
            return Err(NumericsError::EmptyShape);
        }
        if data.len() != rows * cols {
            return Err(NumericsError::BadLength {
                rows,
                cols,
                got: data.len(),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(NumericsError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows_data: &[Vec<f64>]) -> Result<Self, NumericsError> {
        if rows_data.is_empty() {
            return Err(NumericsError::EmptyShape);
        }
        let cols = rows_data[0].len();
        let mut data = Vec::with_capacity(rows_data.len() * cols);
        for r in rows_data {
            if r.len() != cols {
                return Err(NumericsError::ShapeMismatch {
                    expected: format!("row of width {cols}"),
                    got: format!("row of width {}", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows_data.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                t.data[r * cols + c] = f(r, c);
            }
        }
        t
    }

    pub fn random_uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Self {
        Self::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Largest absolute difference between two same-shaped tensors.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in max_abs_diff");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn same_shape(&self, other: &Self) -> Result<(), NumericsError> {
        if self.shape() != other.shape() {
            return Err(NumericsError::ShapeMismatch {
                expected: format!("{}x{}", self.rows, self.cols),
                got: format!("{}x{}", other.rows, other.cols),
            });
        }
        Ok(())
    }
}

/// A learnable tensor paired with an additively accumulated gradient.
///
/// Accumulation is single-writer: a Parameter must not be written from
/// two threads at once.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub value: Tensor2D,
    grad: Tensor2D,
}

impl Parameter {
    pub fn new(value: Tensor2D) -> Self {
        let grad = Tensor2D::zeros(value.rows(), value.cols());
        Self { value, grad }
    }

    pub fn grad(&self) -> &Tensor2D {
        &self.grad
    }

    /// Adds `delta` into the stored gradient.
    pub fn accumulate(&mut self, delta: &Tensor2D) -> Result<(), NumericsError> {
        self.value.same_shape(delta)?;
        for (g, d) in self.grad.data.iter_mut().zip(&delta.data) {
            *g += d;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad.data.fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn from_vec_validates_length_and_finiteness() {
        assert!(matches!(
            Tensor2D::from_vec(2, 2, vec![1.0; 3]),
            Err(NumericsError::BadLength { .. })
        ));
        assert_eq!(
            Tensor2D::from_vec(1, 2, vec![1.0, f64::NAN]),
            Err(NumericsError::NonFinite)
        );
    }

    #[test]
    fn parameter_accumulates_sum_of_backward_passes() {
        let mut p = Parameter::new(Tensor2D::zeros(2, 3));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g1 = Tensor2D::random_uniform(2, 3, -1.0, 1.0, &mut rng);
        let g2 = Tensor2D::random_uniform(2, 3, -1.0, 1.0, &mut rng);
        p.accumulate(&g1).unwrap();
        p.accumulate(&g2).unwrap();
        let expect = add(&g1, &g2).unwrap();
        assert_eq!(p.grad().max_abs_diff(&expect), 0.0);
        p.zero_grad();
        assert_eq!(p.grad().max_abs_diff(&Tensor2D::zeros(2, 3)), 0.0);
    }

    #[test]
    fn parameter_rejects_mismatched_grad() {
        let mut p = Parameter::new(Tensor2D::zeros(2, 3));
        assert!(p.accumulate(&Tensor2D::zeros(3, 2)).is_err());
    }
}
