use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CboError, Result};
use crate::rng::Rng;

/// Random Fourier features approximating the RBF kernel
/// `k(x, x') = variance * exp(-|x - x'|^2 / (2 lengthscale^2))`:
///
/// `z(x)_i = sqrt(2 variance / D) cos(w_i . x + b_i)`, with
/// `w_i ~ N(0, lengthscale^-2 I)` and `b_i ~ U[0, 2 pi)`, frozen at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierFeatureMap {
    /// D x input_dim
    frequencies: DMatrix<f64>,
    phases: DVector<f64>,
    kernel_variance: f64,
    lengthscale: f64,
}

impl FourierFeatureMap {
    pub fn sample(
        input_dim: usize,
        num_features: usize,
        kernel_variance: f64,
        lengthscale: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if num_features == 0 {
            return Err(CboError::Config("feature dimension must be >= 1".into()));
        }
        if !(kernel_variance > 0.0 && lengthscale > 0.0) {
            return Err(CboError::Config(
                "kernel variance and lengthscale must be positive".into(),
            ));
        }
        // Row-major draw order so the map does not depend on storage layout.
        let mut freq = Vec::with_capacity(num_features * input_dim);
        for _ in 0..num_features * input_dim {
            let z: f64 = StandardNormal.sample(rng);
            freq.push(z / lengthscale);
        }
        let frequencies = DMatrix::from_row_slice(num_features, input_dim, &freq);
        let phases = DVector::from_iterator(
            num_features,
            (0..num_features).map(|_| {
                let u: f64 = rand::Rng::random(rng);
                u * std::f64::consts::TAU
            }),
        );
        Ok(Self {
            frequencies,
            phases,
            kernel_variance,
            lengthscale,
        })
    }

    /// Builds a map from explicit frequencies (rows) and phases.
    pub fn from_parts(
        frequencies: DMatrix<f64>,
        phases: DVector<f64>,
        kernel_variance: f64,
        lengthscale: f64,
    ) -> Result<Self> {
        if frequencies.nrows() != phases.len() || phases.is_empty() {
            return Err(CboError::DimensionMismatch {
                expected: frequencies.nrows(),
                found: phases.len(),
            });
        }
        Ok(Self {
            frequencies,
            phases,
            kernel_variance,
            lengthscale,
        })
    }

    /// The same map restricted to inputs without column `col`: frequencies
    /// and phases are kept, so the two maps share their random draw.
    pub fn without_input(&self, col: usize) -> Self {
        Self {
            frequencies: self.frequencies.clone().remove_column(col),
            phases: self.phases.clone(),
            kernel_variance: self.kernel_variance,
            lengthscale: self.lengthscale,
        }
    }

    pub fn dimension(&self) -> usize {
        self.phases.len()
    }

    pub fn input_dim(&self) -> usize {
        self.frequencies.ncols()
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn kernel_variance(&self) -> f64 {
        self.kernel_variance
    }

    pub fn featurize(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(CboError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let scale = (2.0 * self.kernel_variance / self.dimension() as f64).sqrt();
        let x = DVector::from_column_slice(x);
        let proj = &self.frequencies * x + &self.phases;
        Ok(proj.map(|p| scale * p.cos()))
    }

    /// Feature matrix with one row per input row.
    pub fn featurize_rows<'a>(&self, rows: impl Iterator<Item = &'a [f64]>) -> Result<DMatrix<f64>> {
        let feats = rows
            .map(|r| self.featurize(r))
            .collect::<Result<Vec<_>>>()?;
        let d = self.dimension();
        Ok(DMatrix::from_fn(feats.len(), d, |i, j| feats[i][j]))
    }
}
