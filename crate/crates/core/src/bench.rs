//! Latency measurement for per-record processing.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detector::{fit, DetectorParams, DetectorState};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    /// Wall-clock nanoseconds of every `process` call, in call order.
    pub latencies_ns: Vec<f64>,
    pub median_ns: f64,
    pub p90_ns: f64,
    pub p99_ns: f64,
    /// Records per second over all repetitions.
    pub throughput: f64,
}

/// Times `process` on every record of `batch`, `repetitions` times.
///
/// Each repetition starts from a fresh copy of `state`, so the history length
/// seen by the timed calls is the same in every repetition.
pub fn bench_scoring(state: &DetectorState, batch: &[Vec<f64>], repetitions: usize) -> Result<BenchReport> {
    if batch.is_empty() || repetitions == 0 {
        return Err(invalid("benchmark needs a nonempty batch and at least one repetition"));
    }
    let mut latencies_ns = Vec::with_capacity(batch.len() * repetitions);
    let mut total = 0.0;
    for _ in 0..repetitions {
        let mut s = state.clone();
        for x in batch {
            let t0 = Instant::now();
            s.process(x)?;
            let dt = t0.elapsed().as_secs_f64();
            total += dt;
            latencies_ns.push(dt * 1e9);
        }
    }
    let mut sorted = latencies_ns.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BenchReport {
        median_ns: percentile(&sorted, 0.5),
        p90_ns: percentile(&sorted, 0.9),
        p99_ns: percentile(&sorted, 0.99),
        throughput: latencies_ns.len() as f64 / total.max(f64::MIN_POSITIVE),
        latencies_ns,
    })
}

/// Nearest-rank percentile of sorted data.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Latency report for each embedding size, on uniform random data.
///
/// The states are fitted without gradient training since only the shape of the
/// state matters for latency.
pub fn scaling_sweep(
    dims: &[usize],
    input_dim: usize,
    batch_len: usize,
    repetitions: usize,
    seed: u64,
) -> Result<Vec<(usize, BenchReport)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = |n: usize| -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..input_dim).map(|_| rng.gen::<f64>()).collect()).collect()
    };
    let window = rows(16);
    let batch = rows(batch_len);
    dims.iter()
        .map(|&dim| {
            let params = DetectorParams {
                n_init: window.len(),
                sigma: 0.5,
                embedding_dim: dim,
                adaptive: false,
                ..DetectorParams::default()
            };
            let state = fit(&window, None, &params)?.state;
            Ok((dim, bench_scoring(&state, &batch, repetitions)?))
        })
        .collect()
}
