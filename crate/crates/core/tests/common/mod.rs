#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.gen::<f64>()).collect()).collect()
}

/// Two isotropic 2-D Gaussian blobs centred at (0.3, 0.3) and (0.7, 0.7), sd 0.1,
/// alternating between them.
pub fn blobs(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let noise = Normal::new(0.0, 0.1).unwrap();
    (0..n)
        .map(|i| {
            let c = if i % 2 == 0 { 0.3 } else { 0.7 };
            vec![c + noise.sample(rng), c + noise.sample(rng)]
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `sum_i q_i phi_i phi_i^T`, row-major.
pub fn weighted_outer_sum(phis: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let dim = phis[0].len();
    let mut out = vec![0.0; dim * dim];
    for (phi, q) in phis.iter().zip(weights) {
        for i in 0..dim {
            for j in 0..dim {
                out[i * dim + j] += q * phi[i] * phi[j];
            }
        }
    }
    out
}

/// Mann-Whitney statistic by direct pair counting, ties worth one half.
pub fn brute_force_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, si) in scores.iter().enumerate() {
        if !positive[i] {
            continue;
        }
        for (j, sj) in scores.iter().enumerate() {
            if positive[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}
