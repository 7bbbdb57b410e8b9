//! Slow reference computations for cross-checking the density engine.
//!
//! For `rho = sum_i q_i phi_i phi_i^T` the measurement expands as
//!
//! ```text
//! phi^T rho phi = sum_i q_i (phi^T phi_i)(phi_i^T phi) = sum_i q_i (phi . phi_i)^2
//! ```
//!
//! so it can be evaluated from the stored points alone, with no matrix. Because
//! `phi . phi_i` estimates `k(x, x_i)`, the large-`D` limit of the score is
//! `sum_i q_i k(x, x_i)^2`: the kernel enters squared, not linearly.

use crate::error::{invalid, Result};
use crate::feature_map::{gaussian_kernel, FeatureMap};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub tolerance_abs: f64,
    pub max_t: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            tolerance_abs: 1e-9,
            max_t: 500,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tolerance_abs > 0.0 && self.max_t > 0 {
            Ok(())
        } else {
            Err(invalid("oracle tolerance and max_t must be positive"))
        }
    }
}

fn check_weights(n: usize, weights: &[f64]) -> Result<()> {
    if n != weights.len() {
        return Err(invalid(format!("{n} points but {} weights", weights.len())));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(invalid("weights must be nonnegative"));
    }
    Ok(())
}

/// `sum_i q_i (phi(x) . phi(x_i))^2`, computed point by point.
pub fn weighted_kde_score(train: &[Vec<f64>], weights: &[f64], x: &[f64], fm: &FeatureMap) -> Result<f64> {
    check_weights(train.len(), weights)?;
    let phi_x = fm.embed(x)?;
    let mut total = 0.0;
    for (xi, q) in train.iter().zip(weights) {
        let phi_i = fm.embed(xi)?;
        let mut inner = 0.0;
        for j in 0..phi_x.len() {
            inner += phi_x[j] * phi_i[j];
        }
        total += q * inner * inner;
    }
    Ok(total)
}

/// `sum_i q_i k(x, x_i)^2` with the exact Gaussian kernel.
pub fn exact_kernel_density(train: &[Vec<f64>], x: &[f64], sigma: f64, weights: &[f64]) -> Result<f64> {
    check_weights(train.len(), weights)?;
    let mut total = 0.0;
    for (xi, q) in train.iter().zip(weights) {
        let k = gaussian_kernel(x, xi, sigma)?;
        total += q * k * k;
    }
    Ok(total)
}

/// Spearman rank correlation (average ranks on ties).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(invalid("spearman needs two equally long samples of size >= 2"));
    }
    let ra = crate::stats::average_ranks(a);
    let rb = crate::stats::average_ranks(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    Ok(cov / (va * vb).sqrt())
}
