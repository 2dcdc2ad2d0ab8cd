//! Dense row-major arrays of f64 with shape metadata.
//!
//! Every array is finite by construction; operations that could observe
//! non-finite values (after interior mutation) re-check their inputs.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RealArray {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl RealArray {
    /// Builds an array, rejecting shape/value-count mismatches and non-finite values.
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(Error::ShapeMismatch {
                context: "RealArray::new",
                left: shape,
                right: vec![values.len()],
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("RealArray::new"));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            values: vec![0.0; n],
        }
    }

    pub fn scalar(v: f64) -> Result<Self> {
        Self::new(vec![1], vec![v])
    }

    /// 1-D vector from raw values.
    pub fn vector(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(vec![n], values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.values.len() == 1
    }

    fn check_finite(&self, context: &'static str) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(context))
        }
    }

    /// Elementwise min(max(x, 0), 6).
    pub fn relu6(&self) -> Result<RealArray> {
        self.check_finite("relu6 input")?;
        Ok(Self {
            shape: self.shape.clone(),
            values: self.values.iter().map(|&v| relu6_scalar(v)).collect(),
        })
    }

    /// Elementwise logistic sigmoid.
    pub fn sigmoid(&self) -> Result<RealArray> {
        self.check_finite("sigmoid input")?;
        Ok(Self {
            shape: self.shape.clone(),
            values: self.values.iter().map(|&v| sigmoid_scalar(v)).collect(),
        })
    }

    /// Standard matrix product of two rank-2 arrays.
    pub fn matmul(&self, other: &RealArray) -> Result<RealArray> {
        self.check_finite("matmul lhs")?;
        other.check_finite("matmul rhs")?;
        if self.shape.len() != 2 || other.shape.len() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::ShapeMismatch {
                context: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let n = other.shape[1];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let a = self.values[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.values[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            shape: vec![m, n],
            values: out,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        Self {
            shape: vec![n, n],
            values,
        }
    }
}

pub fn relu6_scalar(v: f64) -> f64 {
    v.max(0.0).min(6.0)
}

/// Subgradient used everywhere for relu6: 0 at both kinks (x=0 and x=6).
pub fn relu6_grad_scalar(v: f64) -> f64 {
    if v > 0.0 && v < 6.0 {
        1.0
    } else {
        0.0
    }
}

pub fn sigmoid_scalar(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu6_clamps_both_ends() {
        let x = RealArray::vector(vec![-1.0, 3.0, 7.5]).unwrap();
        assert_eq!(x.relu6().unwrap().values(), &[0.0, 3.0, 6.0]);
    }

    #[test]
    fn sigmoid_symmetry_and_saturation() {
        let x = RealArray::vector(vec![0.0, 50.0]).unwrap();
        let y = x.sigmoid().unwrap();
        assert_eq!(y.values()[0], 0.5);
        assert!((y.values()[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_direct_eval() {
        let x = RealArray::vector(vec![1.0]).unwrap();
        let expected = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((x.sigmoid().unwrap().values()[0] - expected).abs() < 1e-15);
        assert!((expected - 0.731058).abs() < 1e-6);
    }

    #[test]
    fn matmul_identity() {
        let a = RealArray::identity(2);
        let b = RealArray::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().values(), b.values());
    }

    #[test]
    fn matmul_hand_example() {
        let a = RealArray::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let b = RealArray::new(vec![2, 1], vec![3.0, 4.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[1, 1]);
        assert_eq!(c.values(), &[11.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = RealArray::zeros(vec![2, 3]);
        let b = RealArray::zeros(vec![2, 2]);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn non_finite_rejected() {
        assert!(RealArray::vector(vec![f64::NAN]).is_err());
        let mut x = RealArray::vector(vec![1.0]).unwrap();
        x.values_mut()[0] = f64::INFINITY;
        assert!(x.relu6().is_err());
        assert!(x.sigmoid().is_err());
    }
}
