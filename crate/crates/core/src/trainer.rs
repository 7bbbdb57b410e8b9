//! Adaptive Fourier features: gradient descent on the kernel-approximation error.
//!
//! Training starts from [`sample_rff`], enlarges the training set with uniform
//! samples from `[-0.5, 1.5]^d`, fixes a set of random pairs, and runs mini-batch
//! gradient descent on
//!
//! ```text
//! L(W, b) = 1/m * sum_(x, y) (k_sigma(x, y) - phi(x) . phi(y))^2
//! ```
//!
//! with a learning rate that decays linearly from `lr_base` to `lr_end`.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::feature_map::{check_sigma, gaussian_kernel, sample_rff, FeatureMap};
use crate::linalg::dot;

/// Augmented sets smaller than this are padded up to [`SMALL_TRAIN_TARGET`].
pub const SMALL_TRAIN_LIMIT: usize = 1000;
pub const SMALL_TRAIN_TARGET: usize = 10_000;
/// Sampling box for augmentation, per coordinate.
pub const AUGMENT_RANGE: (f64, f64) = (-0.5, 1.5);
pub const DEFAULT_LR_END: f64 = 1e-7;
const MAX_DEFAULT_PAIRS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr_base: f64,
    pub lr_end: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// `None` picks `min(100_000, n_aug^2 / 10)` for an augmented set of size `n_aug`.
    pub num_pairs: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_base: 1e-3,
            lr_end: DEFAULT_LR_END,
            epochs: 10,
            batch_size: 1,
            num_pairs: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// `lr_base = 0` is accepted and freezes the initial map; otherwise
    /// `lr_base >= lr_end > 0` is required.
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_base.is_finite() && self.lr_end.is_finite()) {
            return Err(invalid("learning rates must be finite"));
        }
        if self.lr_base != 0.0 && !(self.lr_base >= self.lr_end && self.lr_end > 0.0) {
            return Err(invalid(format!(
                "need lr_base >= lr_end > 0, got lr_base={} lr_end={}",
                self.lr_base, self.lr_end
            )));
        }
        if self.lr_base < 0.0 {
            return Err(invalid("lr_base must be nonnegative"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid("epochs and batch_size must be positive"));
        }
        if self.num_pairs == Some(0) {
            return Err(invalid("num_pairs must be positive"));
        }
        Ok(())
    }

    /// Learning rate at `step` of `total_steps`, linear from `lr_base` to `lr_end`.
    pub fn learning_rate(&self, step: usize, total_steps: usize) -> f64 {
        if self.lr_base == 0.0 {
            return 0.0;
        }
        let frac = if total_steps <= 1 {
            0.0
        } else {
            step as f64 / (total_steps - 1) as f64
        };
        self.lr_end + (self.lr_base - self.lr_end) * (1.0 - frac)
    }
}

/// Appends uniform samples from `[-0.5, 1.5]^d` to `train`.
///
/// Fewer than 1000 rows are padded to 10,000 in total; otherwise as many samples
/// as there are rows are added. The input rows form the unchanged prefix.
pub fn augment_training_set(train: &[Vec<f64>], seed: u64) -> Result<Vec<Vec<f64>>> {
    let d = row_dim(train)?;
    let extra = if train.len() < SMALL_TRAIN_LIMIT {
        SMALL_TRAIN_TARGET - train.len()
    } else {
        train.len()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = AUGMENT_RANGE;
    let mut out = Vec::with_capacity(train.len() + extra);
    out.extend(train.iter().cloned());
    out.extend((0..extra).map(|_| (0..d).map(|_| rng.gen_range(lo..hi)).collect()));
    Ok(out)
}

/// Index pairs drawn uniformly with replacement from `0..n`.
pub fn sample_pair_indices(n: usize, num_pairs: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if n < 2 {
        return Err(invalid(format!("need at least two rows to form pairs, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..num_pairs)
        .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))
        .collect())
}

/// Random pairs of rows of `data`, drawn uniformly with replacement.
pub fn sample_pairs(data: &[Vec<f64>], num_pairs: usize, seed: u64) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    Ok(sample_pair_indices(data.len(), num_pairs, seed)?
        .into_iter()
        .map(|(i, j)| (data[i].clone(), data[j].clone()))
        .collect())
}

/// Mean squared gap between the exact kernel and the embedding inner product.
pub fn kernel_mse<P: AsRef<[f64]>>(fm: &FeatureMap, pairs: &[(P, P)], sigma: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(invalid("kernel_mse needs at least one pair"));
    }
    check_sigma(sigma)?;
    let mut phi_x = vec![0.0; fm.output_dim()];
    let mut phi_y = vec![0.0; fm.output_dim()];
    let mut total = 0.0;
    for (x, y) in pairs {
        let (x, y) = (x.as_ref(), y.as_ref());
        fm.embed_into(x, &mut phi_x)?;
        fm.embed_into(y, &mut phi_y)?;
        let r = gaussian_kernel(x, y, sigma)? - dot(&phi_x, &phi_y);
        total += r * r;
    }
    Ok(total / pairs.len() as f64)
}

/// Gradient of [`kernel_mse`] with respect to the weights (row-major) and offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub offsets: Vec<f64>,
}

/// Returns `kernel_mse` together with its analytic gradient.
pub fn kernel_mse_gradient<P: AsRef<[f64]>>(
    fm: &FeatureMap,
    pairs: &[(P, P)],
    sigma: f64,
) -> Result<(f64, Gradient)> {
    if pairs.is_empty() {
        return Err(invalid("kernel_mse needs at least one pair"));
    }
    check_sigma(sigma)?;
    for (x, y) in pairs {
        if x.as_ref().len() != fm.input_dim() || y.as_ref().len() != fm.input_dim() {
            return Err(invalid("pair dimension does not match the feature map"));
        }
    }
    let mut grad = Gradient {
        weights: vec![0.0; fm.weights.len()],
        offsets: vec![0.0; fm.output_dim()],
    };
    let mut scratch = Scratch::new(fm.output_dim());
    let loss = accumulate_gradient(fm, pairs.iter().map(|(x, y)| (x.as_ref(), y.as_ref())), pairs.len(), sigma, &mut grad, &mut scratch);
    Ok((loss, grad))
}

struct Scratch {
    sin_x: Vec<f64>,
    cos_x: Vec<f64>,
    sin_y: Vec<f64>,
    cos_y: Vec<f64>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Self {
            sin_x: vec![0.0; dim],
            cos_x: vec![0.0; dim],
            sin_y: vec![0.0; dim],
            cos_y: vec![0.0; dim],
        }
    }
}

// d/dW_j of phi(x).phi(y) = (2/D) (-sin u_j cos v_j x - cos u_j sin v_j y),
// d/db_j = -(2/D) sin(u_j + v_j), with u_j = W_j.x + b_j and v_j = W_j.y + b_j.
fn accumulate_gradient<'a>(
    fm: &FeatureMap,
    pairs: impl Iterator<Item = (&'a [f64], &'a [f64])>,
    m: usize,
    sigma: f64,
    grad: &mut Gradient,
    s: &mut Scratch,
) -> f64 {
    grad.weights.iter_mut().for_each(|g| *g = 0.0);
    grad.offsets.iter_mut().for_each(|g| *g = 0.0);
    let d = fm.input_dim();
    let scale = 2.0 / fm.output_dim() as f64;
    let inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
    let mut loss = 0.0;
    for (x, y) in pairs {
        let mut k_hat = 0.0;
        for j in 0..fm.output_dim() {
            let row = fm.weight_row(j);
            let b = fm.offsets[j];
            let (su, cu) = (dot(row, x) + b).sin_cos();
            let (sv, cv) = (dot(row, y) + b).sin_cos();
            s.sin_x[j] = su;
            s.cos_x[j] = cu;
            s.sin_y[j] = sv;
            s.cos_y[j] = cv;
            k_hat += cu * cv;
        }
        k_hat *= scale;
        let dist: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        let r = k_hat - (-dist * inv_two_sigma_sq).exp();
        loss += r * r;
        let c = 2.0 * r * scale / m as f64;
        for j in 0..fm.output_dim() {
            let a = -c * s.sin_x[j] * s.cos_y[j];
            let bc = -c * s.cos_x[j] * s.sin_y[j];
            grad.offsets[j] += a + bc;
            let g = &mut grad.weights[j * d..(j + 1) * d];
            for l in 0..d {
                g[l] += a * x[l] + bc * y[l];
            }
        }
    }
    loss / m as f64
}

/// Result of [`train_aff_logged`].
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub feature_map: FeatureMap,
    /// `(epoch, loss)`; epoch 0 is the loss of the initial map on the full pair set,
    /// later epochs the mean pre-update mini-batch loss over that epoch.
    pub epoch_losses: Vec<(usize, f64)>,
}

impl TrainReport {
    /// Writes the loss log as `epoch,loss` CSV lines.
    pub fn write_loss_log<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,loss")?;
        for (epoch, loss) in &self.epoch_losses {
            writeln!(out, "{epoch},{loss:.16e}")?;
        }
        Ok(())
    }
}

/// Trains an adaptive Fourier feature map of dimension `output_dim` on `train`.
pub fn train_aff(train: &[Vec<f64>], sigma: f64, output_dim: usize, cfg: &TrainConfig) -> Result<FeatureMap> {
    Ok(train_aff_logged(train, sigma, output_dim, cfg)?.feature_map)
}

pub fn train_aff_logged(
    train: &[Vec<f64>],
    sigma: f64,
    output_dim: usize,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    let d = row_dim(train)?;
    let mut fm = sample_rff(d, output_dim, sigma, cfg.seed)?;

    let data = augment_training_set(train, derive_seed(cfg.seed, 1))?;
    let n = data.len();
    let num_pairs = cfg
        .num_pairs
        .unwrap_or_else(|| (n.saturating_mul(n) / 10).clamp(1, MAX_DEFAULT_PAIRS));
    let mut pairs = sample_pair_indices(n, num_pairs, derive_seed(cfg.seed, 2))?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 3));

    let as_slices = |pairs: &[(usize, usize)]| -> Vec<(&[f64], &[f64])> {
        pairs.iter().map(|&(i, j)| (data[i].as_slice(), data[j].as_slice())).collect()
    };
    let initial = kernel_mse(&fm, &as_slices(&pairs), sigma)?;
    if !initial.is_finite() {
        return Err(Error::TrainingDiverged { step: 0 });
    }
    let mut epoch_losses = vec![(0, initial)];

    let steps_per_epoch = num_pairs.div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut grad = Gradient {
        weights: vec![0.0; fm.weights.len()],
        offsets: vec![0.0; output_dim],
    };
    let mut scratch = Scratch::new(output_dim);
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        pairs.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in pairs.chunks(cfg.batch_size) {
            let iter = batch.iter().map(|&(i, j)| (data[i].as_slice(), data[j].as_slice()));
            let loss = accumulate_gradient(&fm, iter, batch.len(), sigma, &mut grad, &mut scratch);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { step });
            }
            epoch_loss += loss * batch.len() as f64;
            let lr = cfg.learning_rate(step, total_steps);
            for (w, g) in fm.weights.iter_mut().zip(&grad.weights) {
                *w -= lr * g;
            }
            for (b, g) in fm.offsets.iter_mut().zip(&grad.offsets) {
                *b -= lr * g;
            }
            step += 1;
        }
        epoch_losses.push((epoch, epoch_loss / num_pairs as f64));
    }
    if fm.weights.iter().chain(&fm.offsets).any(|v| !v.is_finite()) {
        return Err(Error::TrainingDiverged { step });
    }
    fm.wrap_offsets();
    Ok(TrainReport {
        feature_map: fm,
        epoch_losses,
    })
}

fn row_dim(rows: &[Vec<f64>]) -> Result<usize> {
    let first = rows.first().ok_or_else(|| invalid("training set is empty"))?;
    let d = first.len();
    if d == 0 {
        return Err(invalid("training rows must have at least one feature"));
    }
    if rows.iter().any(|r| r.len() != d) {
        return Err(invalid("training rows have inconsistent lengths"));
    }
    Ok(d)
}

/// Independent sub-stream seed for the `stream`-th random component of a run.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
