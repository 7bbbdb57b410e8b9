//! Single-pass streaming anomaly detection with adaptive Fourier features and a
//! density matrix.
//!
//! Records are embedded with a Fourier-feature map whose inner products
//! approximate a Gaussian kernel. The map can be refined by gradient descent on
//! the kernel-approximation error ([`trainer`]). A density matrix `rho` built
//! from the embedded initialization window scores each new record by the
//! quadratic form `phi(x)^T rho phi(x)`; records scoring at or above the learned
//! threshold are folded back into `rho` with an exponential decay, so older
//! records fade out and memory stays `O(D^2)` however long the stream runs.
//!
//! ```no_run
//! use inqmad::{data, detector, eval};
//!
//! let stream = data::generate_synthetic(10_000, 0.1, 7)?;
//! let params = detector::DetectorParams::default();
//! let report = eval::evaluate_stream(&stream, &params)?;
//! println!("auc={:.3}", report.auc);
//! # Ok::<(), inqmad::Error>(())
//! ```

pub mod bench;
pub mod checkpoint;
pub mod data;
pub mod density;
pub mod detector;
pub mod error;
pub mod eval;
pub mod feature_map;
mod linalg;
pub mod metrics;
pub mod oracle;
pub mod stats;
pub mod trainer;

pub use data::{StreamRecord, SyntheticConfig};
pub use density::{DensityMatrix, InitMode};
pub use detector::{Decision, DetectorParams, DetectorState, FitOutcome, Label, ThresholdMode};
pub use error::{Error, Result};
pub use eval::{EvalReport, GridSpec};
pub use feature_map::{gaussian_kernel, sample_rff, FeatureMap};
pub use trainer::TrainConfig;

/// Plain dot product, exposed for tests and oracles.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    linalg::dot(a, b)
}
