//! Gaussian moments of feature sets and the Fréchet distance between them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, EvalError, Result};

/// Regularization added to fitted covariances.
pub const COVARIANCE_EPS: f64 = 1e-6;
const SYMMETRY_TOL: f64 = 1e-8;
const PSD_TOL: f64 = -1e-8;

/// Mean and covariance (row-major `F × F`) of a feature distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianStats {
    pub mean: Vec<f64>,
    pub covariance: Vec<f64>,
}

impl GaussianStats {
    /// Checks finiteness, symmetry and positive semi-definiteness.
    pub fn new(mean: Vec<f64>, covariance: Vec<f64>) -> Result<Self> {
        let f = mean.len();
        if f == 0 || covariance.len() != f * f {
            return invalid(format!("mean of {f} entries needs a {f}x{f} covariance, got {} values", covariance.len()));
        }
        if mean.iter().chain(&covariance).any(|v| !v.is_finite()) {
            return invalid("non-finite moment");
        }
        for i in 0..f {
            for j in 0..i {
                if (covariance[i * f + j] - covariance[j * f + i]).abs() > SYMMETRY_TOL {
                    return invalid(format!("covariance not symmetric at ({i}, {j})"));
                }
            }
        }
        let stats = Self { mean, covariance };
        let min = stats.eigen().eigenvalues.min();
        if min < PSD_TOL {
            return Err(EvalError::NotPsd(min));
        }
        Ok(stats)
    }

    /// Sample mean and unbiased covariance plus `eps·I`.
    pub fn fit(features: &[Vec<f64>], eps: f64) -> Result<Self> {
        let n = features.len();
        let Some(f) = features.first().map(Vec::len) else {
            return invalid("no features to fit");
        };
        if f == 0 || features.iter().any(|x| x.len() != f) {
            return invalid("features must share one non-zero width");
        }
        let mut mean = vec![0.0; f];
        for x in features {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = vec![0.0; f * f];
        for x in features {
            for i in 0..f {
                let di = x[i] - mean[i];
                for j in 0..=i {
                    cov[i * f + j] += di * (x[j] - mean[j]);
                }
            }
        }
        let denom = n.saturating_sub(1).max(1) as f64;
        for i in 0..f {
            for j in 0..=i {
                let v = cov[i * f + j] / denom;
                cov[i * f + j] = v;
                cov[j * f + i] = v;
            }
            cov[i * f + i] += eps;
        }
        Self::new(mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), &self.covariance)
    }

    fn eigen(&self) -> SymmetricEigen<f64, nalgebra::Dyn> {
        SymmetricEigen::new(self.covariance_matrix())
    }
}

/// Square root of a symmetric PSD matrix; negative round-off eigenvalues are
/// clamped to zero.
fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new(m.clone());
    let roots = DVector::from_iterator(e.eigenvalues.len(), e.eigenvalues.iter().map(|v| v.max(0.0).sqrt()));
    &e.eigenvectors * DMatrix::from_diagonal(&roots) * e.eigenvectors.transpose()
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2(Σa Σb)^{1/2})`.
///
/// The trace of `(Σa Σb)^{1/2}` is taken as the trace of the symmetric
/// `(Σa^{1/2} Σb Σa^{1/2})^{1/2}`, which has the same eigenvalues.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return invalid(format!("feature widths differ: {} vs {}", a.dim(), b.dim()));
    }
    let mean_term: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y).powi(2)).sum();
    let sa = a.covariance_matrix();
    let sb = b.covariance_matrix();
    let ra = sym_sqrt(&sa);
    let mut m = &ra * &sb * &ra;
    m = (&m + m.transpose()) * 0.5;
    let e = SymmetricEigen::new(m);
    let min = e.eigenvalues.min();
    if min < PSD_TOL * (1.0 + sa.trace() * sb.trace()) {
        return Err(EvalError::NotPsd(min));
    }
    let cross: f64 = e.eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
    let d = mean_term + sa.trace() + sb.trace() - 2.0 * cross;
    if !d.is_finite() {
        return invalid("non-finite Fréchet distance");
    }
    Ok(d.max(0.0))
}
