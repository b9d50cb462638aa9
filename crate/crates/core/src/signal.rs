use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A vector in `R^n` stored by its support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseSignal {
    n: usize,
    support: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSignal {
    /// `support` must be strictly increasing and inside `0..n`; `values` must be nonzero.
    pub fn new(n: usize, support: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if support.len() != values.len() {
            return Err(Error::Dimension(format!(
                "{} support indices but {} values",
                support.len(),
                values.len()
            )));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "support must be strictly increasing".into(),
            ));
        }
        if support.last().is_some_and(|&i| i >= n) {
            return Err(Error::InvalidArgument(format!(
                "support index out of range 0..{n}"
            )));
        }
        if values.iter().any(|v| *v == 0.0 || !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "stored values must be finite and nonzero".into(),
            ));
        }
        Ok(Self { n, support, values })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            n,
            support: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(x: &DVector<f64>) -> Result<Self> {
        let (support, values) = x
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        Self::new(x.len(), support, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `||x||_0`.
    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn to_dense(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.n);
        for (&i, &v) in self.support.iter().zip(&self.values) {
            x[i] = v;
        }
        x
    }

    /// Smallest nonzero magnitude, `+inf` for the zero signal.
    pub fn min_abs(&self) -> f64 {
        self.values
            .iter()
            .map(|v| v.abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `||x_{S^c}||_2`, the energy left outside an index set.
    pub fn norm_outside(&self, set: &[usize]) -> f64 {
        self.support
            .iter()
            .zip(&self.values)
            .filter(|(i, _)| !set.contains(i))
            .map(|(_, v)| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// `x_T` as a dense vector.
    pub fn restrict_dense(&self, set: &[usize]) -> DVector<f64> {
        let mut x = DVector::zeros(self.n);
        for (&i, &v) in self.support.iter().zip(&self.values) {
            if set.contains(&i) {
                x[i] = v;
            }
        }
        x
    }
}
