//! Gaussian kernel and its Fourier-feature embedding.
//!
//! The kernel is `k(x, y) = exp(-|x - y|^2 / (2 sigma^2))`. A [`FeatureMap`] holds
//! `D` frequency rows `w_j` and phases `b_j` and embeds a point as
//! `phi(x)_j = sqrt(2/D) cos(w_j . x + b_j)`, so that `phi(x) . phi(y)` estimates
//! `k(x, y)` directly (no extra averaging by the caller).

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};
use crate::linalg::{dot, squared_distance};

/// Exact Gaussian kernel with bandwidth `sigma`.
pub fn gaussian_kernel(x: &[f64], y: &[f64], sigma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(invalid(format!(
            "kernel arguments differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    check_sigma(sigma)?;
    Ok((-squared_distance(x, y) / (2.0 * sigma * sigma)).exp())
}

/// Fourier-feature embedding parameters.
///
/// Immutable once built; `embed` takes `&self` and can be called from many threads.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    /// `output_dim x input_dim`, row-major.
    pub(crate) weights: Vec<f64>,
    pub(crate) offsets: Vec<f64>,
    pub(crate) input_dim: usize,
    pub(crate) output_dim: usize,
    pub(crate) sigma: f64,
}

impl FeatureMap {
    /// Builds a feature map from explicit parameters.
    ///
    /// `weights` is row-major with one row of length `input_dim` per output feature.
    /// Every offset must already lie in `[0, 2pi)`.
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        sigma: f64,
        weights: Vec<f64>,
        offsets: Vec<f64>,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(invalid("feature map dimensions must be positive"));
        }
        check_sigma(sigma)?;
        if weights.len() != input_dim * output_dim {
            return Err(invalid(format!(
                "expected {} weights for a {output_dim}x{input_dim} map, got {}",
                input_dim * output_dim,
                weights.len()
            )));
        }
        if offsets.len() != output_dim {
            return Err(invalid(format!(
                "expected {output_dim} offsets, got {}",
                offsets.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(invalid("feature map weights must be finite"));
        }
        if offsets.iter().any(|b| !(0.0..TAU).contains(b)) {
            return Err(invalid("feature map offsets must lie in [0, 2pi)"));
        }
        Ok(Self {
            weights,
            offsets,
            input_dim,
            output_dim,
            sigma,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn weight_row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.input_dim..(j + 1) * self.input_dim]
    }

    /// `sqrt(2/D)`, the per-feature amplitude.
    pub fn amplitude(&self) -> f64 {
        (2.0 / self.output_dim as f64).sqrt()
    }

    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.output_dim];
        self.embed_into(x, &mut out)?;
        Ok(out)
    }

    /// Writes `phi(x)` into `out`, which must have length `output_dim`.
    pub fn embed_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(invalid(format!(
                "input has {} features, feature map expects {}",
                x.len(),
                self.input_dim
            )));
        }
        if out.len() != self.output_dim {
            return Err(invalid(format!(
                "output buffer has length {}, feature map produces {}",
                out.len(),
                self.output_dim
            )));
        }
        let amp = self.amplitude();
        for (j, (o, b)) in out.iter_mut().zip(&self.offsets).enumerate() {
            *o = amp * (dot(self.weight_row(j), x) + b).cos();
        }
        Ok(())
    }

    /// Wraps every phase back into `[0, 2pi)`. Leaves `embed` unchanged up to rounding.
    pub(crate) fn wrap_offsets(&mut self) {
        for b in &mut self.offsets {
            *b = wrap_phase(*b);
        }
    }
}

pub(crate) fn wrap_phase(b: f64) -> f64 {
    let r = b.rem_euclid(TAU);
    // rem_euclid rounds tiny negative inputs up to exactly TAU
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Draws random Fourier features for the Gaussian kernel of bandwidth `sigma`.
///
/// Rows of `W` are i.i.d. `N(0, sigma^-2 I)` and phases i.i.d. `Uniform[0, 2pi)`.
/// The same arguments always produce the same map.
pub fn sample_rff(input_dim: usize, output_dim: usize, sigma: f64, seed: u64) -> Result<FeatureMap> {
    if input_dim == 0 || output_dim == 0 {
        return Err(invalid("feature map dimensions must be positive"));
    }
    check_sigma(sigma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0 / sigma).map_err(|e| invalid(e.to_string()))?;
    let weights = (0..input_dim * output_dim)
        .map(|_| normal.sample(&mut rng))
        .collect();
    let offsets = (0..output_dim).map(|_| rng.gen_range(0.0..TAU)).collect();
    FeatureMap::new(input_dim, output_dim, sigma, weights, offsets)
}

pub(crate) fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("bandwidth must be positive and finite, got {sigma}")))
    }
}
