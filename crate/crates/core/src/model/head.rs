use alloc::vec;
use alloc::vec::Vec;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, softmax, Matrix};
use crate::rng::{self, Purpose};

/// Linear classifier `W·x + b` with `W: S × D`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl HeadParams {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(num_classes, dim),
            bias: vec![0.0; num_classes],
        }
    }

    /// Weights and biases uniform in `[-scale, scale]`.
    pub fn uniform(num_classes: usize, dim: usize, scale: f64, seed: u64, stream: u64) -> Self {
        let mut rng = rng::stream(seed, Purpose::HeadInit, stream);
        Self {
            weight: Matrix::from_fn(num_classes, dim, |_, _| rng.random_range(-scale..=scale)),
            bias: (0..num_classes).map(|_| rng.random_range(-scale..=scale)).collect(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn logits(&self, feature: &[f64]) -> Result<Vec<f64>> {
        if feature.len() != self.dim() {
            return Err(Error::Shape(alloc::format!(
                "feature of length {} for head of width {}",
                feature.len(),
                self.dim()
            )));
        }
        let mut z = self.weight.matvec(feature);
        for (v, b) in z.iter_mut().zip(&self.bias) {
            *v += b;
        }
        Ok(z)
    }

    pub fn predict(&self, feature: &[f64]) -> Result<usize> {
        Ok(crate::linalg::argmax(&self.logits(feature)?))
    }
}

/// Cross-entropy of `label` under softmax(`logits`) and its gradient with
/// respect to the logits.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let loss = log_sum_exp(logits) - logits[label];
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_head_gives_uniform_softmax() {
        let h = HeadParams::zeros(3, 2);
        let z = h.logits(&[0.3, -1.0]).unwrap();
        assert_eq!(z, [0.0; 3]);
        let p = softmax(&z);
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn basis_feature_selects_column() {
        let h = HeadParams {
            weight: Matrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            bias: vec![0.0; 3],
        };
        assert_eq!(h.logits(&[0.0, 1.0]).unwrap(), [2.0, 4.0, 6.0]);
    }

    #[test]
    fn hand_matrix_multiply() {
        let h = HeadParams {
            weight: Matrix::from_vec(3, 2, vec![0.5, -1.0, 2.0, 0.25, -0.75, 1.5]),
            bias: vec![0.1, 0.2, -0.3],
        };
        // [0.5·2 − 1·(−4) + 0.1, 2·2 + 0.25·(−4) + 0.2, −0.75·2 + 1.5·(−4) − 0.3]
        let z = h.logits(&[2.0, -4.0]).unwrap();
        let expect = [5.1, 3.2, -7.8];
        for (a, b) in z.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(h.logits(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn cross_entropy_limits() {
        let (loss, _) = cross_entropy(&[0.0, 0.0], 0);
        assert!((loss - core::f64::consts::LN_2).abs() < 1e-15);
        let (loss, grad) = cross_entropy(&[30.0, 0.0], 0);
        assert!(loss.abs() < 1e-9);
        assert!(grad.iter().all(|g| g.abs() < 1e-9));
    }
}
