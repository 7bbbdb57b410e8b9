//! Rank tests for comparing several methods over several datasets: the Friedman
//! test and the Nemenyi post-hoc comparison.
//!
//! Input is an `N x k` matrix, one row per dataset and one column per method.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FriedmanResult {
    pub q: f64,
    pub p_value: f64,
    /// Sum of per-row ranks for each column.
    pub rank_sums: Vec<f64>,
}

/// Keeps only the rows without missing cells.
pub fn drop_incomplete_rows(rows: &[Vec<Option<f64>>]) -> Vec<Vec<f64>> {
    rows.iter()
        .filter(|r| r.iter().all(Option::is_some))
        .map(|r| r.iter().map(|v| v.unwrap()).collect())
        .collect()
}

fn check_matrix(m: &[Vec<f64>]) -> Result<(usize, usize)> {
    let n = m.len();
    let k = m.first().map_or(0, Vec::len);
    if n < 2 || k < 2 {
        return Err(invalid(format!("need at least 2 rows and 2 columns, got {n}x{k}")));
    }
    if m.iter().any(|r| r.len() != k) {
        return Err(invalid("rows have different numbers of columns"));
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid("matrix has missing or non-finite cells; drop incomplete rows first"));
    }
    Ok((n, k))
}

/// Ascending ranks starting at 1, tied values sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = avg;
        }
        i = j;
    }
    ranks
}

fn rank_sums(m: &[Vec<f64>], k: usize) -> Vec<f64> {
    let mut sums = vec![0.0; k];
    for row in m {
        for (s, r) in sums.iter_mut().zip(average_ranks(row)) {
            *s += r;
        }
    }
    sums
}

/// `Q = 12 / (N k (k+1)) * sum_j R_j^2 - 3 N (k+1)`, with the p-value from the
/// chi-square distribution on `k - 1` degrees of freedom.
pub fn friedman_q(m: &[Vec<f64>]) -> Result<FriedmanResult> {
    let (n, k) = check_matrix(m)?;
    let rank_sums = rank_sums(m, k);
    let (nf, kf) = (n as f64, k as f64);
    let sum_sq: f64 = rank_sums.iter().map(|r| r * r).sum();
    let q = 12.0 * sum_sq / (nf * kf * (kf + 1.0)) - 3.0 * nf * (kf + 1.0);
    let chi = ChiSquared::new(kf - 1.0).map_err(|e| invalid(e.to_string()))?;
    let p_value = chi.sf(q.max(0.0)).clamp(0.0, 1.0);
    Ok(FriedmanResult { q, p_value, rank_sums })
}

/// Pairwise Nemenyi p-values, symmetric with a unit diagonal.
///
/// Mean-rank gaps are scaled by `sqrt(k (k+1) / (6 N))` and referred to the
/// studentized range distribution with `k` groups and infinite degrees of freedom.
pub fn nemenyi(m: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let (n, k) = check_matrix(m)?;
    let mean_ranks: Vec<f64> = rank_sums(m, k).into_iter().map(|s| s / n as f64).collect();
    let se = (k as f64 * (k as f64 + 1.0) / (6.0 * n as f64)).sqrt();
    let mut p = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let q = (mean_ranks[i] - mean_ranks[j]).abs() / se * std::f64::consts::SQRT_2;
            let v = studentized_range_sf(q, k);
            p[i][j] = v;
            p[j][i] = v;
        }
    }
    Ok(p)
}

/// Pairs whose Nemenyi p-value falls below `level`.
pub fn significant_pairs(p: &[Vec<f64>], level: f64) -> Vec<Vec<bool>> {
    p.iter().map(|row| row.iter().map(|v| *v < level).collect()).collect()
}

/// `P(Q <= q)` for the range of `k` i.i.d. standard normals:
/// `k * integral phi(z) (Phi(z) - Phi(z - q))^(k-1) dz`.
pub fn studentized_range_cdf(q: f64, k: usize) -> f64 {
    if q <= 0.0 || k < 2 {
        return 0.0;
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    let integrand = |z: f64| {
        let inner = std.cdf(z) - std.cdf(z - q);
        (-0.5 * z * z).exp() * inner.powi(k as i32 - 1)
    };
    // the integrand vanishes outside [-9, 9 + q] to double precision
    let (a, b) = (-9.0, 9.0 + q);
    let steps = 4000;
    let h = (b - a) / steps as f64;
    let mut acc = integrand(a) + integrand(b);
    for s in 1..steps {
        let w = if s % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * integrand(a + s as f64 * h);
    }
    let integral = acc * h / 3.0 / (2.0 * std::f64::consts::PI).sqrt();
    (k as f64 * integral).clamp(0.0, 1.0)
}

pub fn studentized_range_sf(q: f64, k: usize) -> f64 {
    (1.0 - studentized_range_cdf(q, k)).clamp(0.0, 1.0)
}
