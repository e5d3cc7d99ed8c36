//! Dense row-major f64 tensors.
//!
//! Everything downstream (autodiff, the model, the training loop) works on
//! this one type. Shapes are explicit `Vec<usize>`; a scalar is rank 0 with
//! a single element.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(Error::InvalidConfig(format!(
                "tensor shape {:?} wants {} elements, got {}",
                shape,
                expected,
                values.len()
            )));
        }
        Ok(Tensor { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            values: vec![0.0; n],
        }
    }

    pub fn ones(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            values: vec![1.0; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            values: vec![v],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Scalar extraction; the tensor must hold exactly one element.
    pub fn item(&self) -> Result<f64> {
        if self.values.len() == 1 {
            Ok(self.values[0])
        } else {
            Err(Error::shape("item()", &[1], &self.shape))
        }
    }

    pub fn at2(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.values[i * self.shape[1] + j]
    }

    pub fn at3(&self, i: usize, j: usize, k: usize) -> f64 {
        debug_assert_eq!(self.rank(), 3);
        self.values[(i * self.shape[1] + j) * self.shape[2] + k]
    }

    /// Index of the first non-finite element, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Sums a buffer in a canonical order: ascending by total order, then a
/// plain left fold. The result depends only on the multiset of addends,
/// never on their original arrangement, which is what makes node-axis
/// reductions bitwise permutation-invariant. Mutates the buffer (sorts it).
pub fn canonical_sum(buf: &mut [f64]) -> f64 {
    buf.sort_unstable_by(f64::total_cmp);
    buf.iter().fold(0.0, |acc, &v| acc + v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_checks_element_count() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn scalar_is_rank_zero() {
        let s = Tensor::scalar(4.25);
        assert_eq!(s.rank(), 0);
        assert_eq!(s.item().unwrap(), 4.25);
        assert!(Tensor::zeros(vec![2]).item().is_err());
    }

    #[test]
    fn indexing_is_row_major() {
        let t = Tensor::new(vec![2, 3], (0..6).map(|v| v as f64).collect()).unwrap();
        assert_eq!(t.at2(0, 2), 2.0);
        assert_eq!(t.at2(1, 0), 3.0);
        let u = Tensor::new(vec![2, 2, 2], (0..8).map(|v| v as f64).collect()).unwrap();
        assert_eq!(u.at3(1, 0, 1), 5.0);
    }

    #[test]
    fn canonical_sum_ignores_order() {
        // Values chosen so naive left-to-right sums differ across orderings.
        let vals = [1e16, 1.0, -1e16, 3.5, 0.1, -2.75];
        let mut a = vals;
        let mut b = vals;
        b.reverse();
        let mut c = [0.1, -1e16, 3.5, 1.0, -2.75, 1e16];
        let ra = canonical_sum(&mut a);
        let rb = canonical_sum(&mut b);
        let rc = canonical_sum(&mut c);
        assert_eq!(ra.to_bits(), rb.to_bits());
        assert_eq!(ra.to_bits(), rc.to_bits());
    }

    #[test]
    fn first_non_finite_finds_nan_and_inf() {
        let t = Tensor::new(vec![3], vec![1.0, f64::NAN, 2.0]).unwrap();
        assert_eq!(t.first_non_finite(), Some(1));
        let u = Tensor::new(vec![2], vec![f64::INFINITY, 0.0]).unwrap();
        assert_eq!(u.first_non_finite(), Some(0));
        assert_eq!(Tensor::ones(vec![4]).first_non_finite(), None);
    }
}
