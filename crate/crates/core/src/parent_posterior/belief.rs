use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{CboError, Result};

/// Gaussian belief `N(mean, covariance)` over the weights of one
/// Bayesian linear model, kept in both moment and precision form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBelief {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    precision: DMatrix<f64>,
    log_det_cov: f64,
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn factor(precision: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(precision.clone()).ok_or_else(|| {
        CboError::Numerical("parameter precision is not positive definite".into())
    })
}

fn log_det_from_chol(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

impl GaussianBelief {
    /// `N(0, variance I)`.
    pub fn isotropic(dim: usize, variance: f64) -> Self {
        Self {
            mean: DVector::zeros(dim),
            covariance: DMatrix::identity(dim, dim) * variance,
            precision: DMatrix::identity(dim, dim) / variance,
            log_det_cov: dim as f64 * variance.ln(),
        }
    }

    /// Belief with precision `precision` and mean `precision^-1 eta`.
    pub fn from_natural(mut precision: DMatrix<f64>, eta: &DVector<f64>) -> Result<Self> {
        symmetrize(&mut precision);
        let chol = factor(&precision)?;
        let mean = chol.solve(eta);
        let mut covariance = chol.inverse();
        symmetrize(&mut covariance);
        let log_det_cov = -log_det_from_chol(&chol);
        let b = Self {
            mean,
            covariance,
            precision,
            log_det_cov,
        };
        b.check_finite()?;
        Ok(b)
    }

    /// Posterior after a batch of rows `features` (n x p) with targets `y`,
    /// starting from `N(0, prior_variance I)`:
    /// `A = Phi^T Phi / noise + I / prior`, `mean = A^-1 Phi^T y / noise`.
    pub fn fit_batch(
        features: &DMatrix<f64>,
        y: &DVector<f64>,
        noise_variance: f64,
        prior_variance: f64,
    ) -> Result<Self> {
        if features.nrows() != y.len() {
            return Err(CboError::DimensionMismatch {
                expected: features.nrows(),
                found: y.len(),
            });
        }
        let p = features.ncols();
        let precision = features.tr_mul(features) / noise_variance
            + DMatrix::identity(p, p) / prior_variance;
        let eta = features.tr_mul(y) / noise_variance;
        Self::from_natural(precision, &eta)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn log_det_covariance(&self) -> f64 {
        self.log_det_cov
    }

    /// Predictive mean `mean . phi` and parameter variance `phi^T Sigma phi`
    /// (noise excluded).
    pub fn predict(&self, phi: &DVector<f64>) -> (f64, f64) {
        let m = self.mean.dot(phi);
        let v = (&self.covariance * phi).dot(phi);
        (m, v.max(0.0))
    }

    /// Conditions on one observation `y = theta . phi + eps`,
    /// `eps ~ N(0, noise_variance)`. Returns the log marginal likelihood of
    /// `y` together with the updated belief.
    ///
    /// The increment is assembled from the prior and posterior natural
    /// parameters,
    ///
    /// `-1/2 log(2 pi s2) - 1/2 log|Sigma| - y^2/(2 s2) - 1/2 mu^T Sigma^-1 mu
    ///  + 1/2 b^T C^-1 b + 1/2 log|C|`,
    ///
    /// with `C^-1 = Sigma^-1 + phi phi^T / s2` and `b` the posterior mean.
    pub fn condition(
        &self,
        phi: &DVector<f64>,
        y: f64,
        noise_variance: f64,
    ) -> Result<(f64, GaussianBelief)> {
        if phi.len() != self.dim() {
            return Err(CboError::DimensionMismatch {
                expected: self.dim(),
                found: phi.len(),
            });
        }
        if !y.is_finite() || phi.iter().any(|v| !v.is_finite()) {
            return Err(CboError::NonFinite(
                "observation passed to belief update".into(),
            ));
        }
        let eta_prior = &self.precision * &self.mean;
        let mut precision = self.precision.clone();
        precision.ger(1.0 / noise_variance, phi, phi, 1.0);
        let eta = &eta_prior + phi * (y / noise_variance);
        let post = Self::from_natural(precision, &eta)?;

        let inc = -0.5 * (LN_2PI + noise_variance.ln())
            - 0.5 * self.log_det_cov
            - y * y / (2.0 * noise_variance)
            - 0.5 * self.mean.dot(&eta_prior)
            + 0.5 * post.mean.dot(&eta)
            + 0.5 * post.log_det_cov;
        if !inc.is_finite() {
            return Err(CboError::NonFinite("log marginal increment".into()));
        }
        Ok((inc, post))
    }

    fn check_finite(&self) -> Result<()> {
        if self.mean.iter().all(|v| v.is_finite())
            && self.covariance.iter().all(|v| v.is_finite())
            && self.log_det_cov.is_finite()
        {
            Ok(())
        } else {
            Err(CboError::NonFinite("belief parameters".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
        -0.5 * (LN_2PI + var.ln()) - (x - mean).powi(2) / (2.0 * var)
    }

    #[test]
    fn scalar_increment_is_predictive_density() {
        let b = GaussianBelief::isotropic(1, 1.0);
        let (inc, post) = b.condition(&DVector::from_element(1, 1.0), 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(inc, log_normal_pdf(1.0, 0.0, 2.0), epsilon = 1e-12);
        assert_abs_diff_eq!(post.mean()[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(post.covariance()[(0, 0)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn empty_model_increment() {
        let b = GaussianBelief::isotropic(0, 1.0);
        let (inc, post) = b.condition(&DVector::zeros(0), 0.7, 2.0).unwrap();
        assert_abs_diff_eq!(inc, log_normal_pdf(0.7, 0.0, 2.0), epsilon = 1e-12);
        assert_eq!(post.dim(), 0);
    }

    #[test]
    fn increment_matches_closed_form_predictive() {
        let phi_prev = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 2.0, 0.8, -1.1]);
        let y_prev = DVector::from_column_slice(&[0.4, 1.2, -0.7]);
        let b = GaussianBelief::fit_batch(&phi_prev, &y_prev, 0.5, 2.0).unwrap();
        let phi = DVector::from_column_slice(&[0.3, -1.4]);
        let (m, v) = b.predict(&phi);
        let (inc, _) = b.condition(&phi, 0.9, 0.5).unwrap();
        assert_abs_diff_eq!(inc, log_normal_pdf(0.9, m, v + 0.5), epsilon = 1e-10);
    }

    #[test]
    fn batch_equals_sequential() {
        let n = 40;
        let phi = DMatrix::from_fn(n, 3, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin());
        let y = DVector::from_fn(n, |i, _| ((i as f64) * 0.21).cos());
        let batch = GaussianBelief::fit_batch(&phi, &y, 1.0, 1.0).unwrap();
        let mut seq = GaussianBelief::isotropic(3, 1.0);
        for i in 0..n {
            let row = phi.row(i).transpose();
            seq = seq.condition(&row, y[i], 1.0).unwrap().1;
        }
        assert!((batch.mean() - seq.mean()).amax() < 1e-10);
        assert!((batch.covariance() - seq.covariance()).amax() < 1e-10);
    }

    #[test]
    fn rejects_non_finite() {
        let b = GaussianBelief::isotropic(1, 1.0);
        assert!(matches!(
            b.condition(&DVector::from_element(1, 1.0), f64::NAN, 1.0),
            Err(CboError::NonFinite(_))
        ));
    }

    #[test]
    fn covariance_stays_positive_definite() {
        let mut b = GaussianBelief::isotropic(4, 1.0);
        for i in 0..500 {
            let phi = DVector::from_fn(4, |j, _| ((i * 4 + j) as f64).sin());
            b = b.condition(&phi, (i as f64).cos(), 1.0).unwrap().1;
        }
        let eig = b.covariance().clone().symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e > 0.0));
    }
}
