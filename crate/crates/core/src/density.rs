//! Density matrix over Fourier-feature embeddings.
//!
//! `rho` is a symmetric `D x D` matrix holding a convex combination of rank-one
//! terms `phi(x_i) phi(x_i)^T`. Only the upper triangle is stored, packed row by
//! row, which halves the memory traffic of every score and update. Scoring is the quadratic form
//! `phi(x)^T rho phi(x) / M`, and absorbing a point is the exponential blend
//! `rho <- (1 - alpha) rho + alpha phi phi^T`, which costs `O(D^2)` regardless of
//! how many points have been absorbed.
//!
//! Starting from `rho_1 = phi_1 phi_1^T`, `t` blends leave
//! `rho_t = sum_i q_i phi_i phi_i^T` with the weights from [`reconstruct_weights`].
//!
//! `measure` only reads; `update` writes in place. Callers sharing a matrix across
//! threads must serialize writers against readers (e.g. behind an `RwLock`):
//! a read that overlaps a write observes a partially blended matrix.

use crate::error::{invalid, Error, Result};
use crate::linalg::dot;

/// Measurements in `[-PSD_SLACK, 0)` are rounding noise and are clamped to zero.
pub const PSD_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMode {
    /// `rho_1 = phi_1 phi_1^T`, then the decay blend for every later point.
    #[default]
    Exponential,
    /// Equal-weight average of all outer products.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    // row i holds columns i..dim
    pub(crate) upper: Vec<f64>,
    pub(crate) dim: usize,
    pub(crate) t: u64,
}

fn packed_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

impl DensityMatrix {
    /// `phi phi^T` with `t = 1`.
    pub fn rank_one(phi: &[f64]) -> Result<Self> {
        let dim = phi.len();
        if dim == 0 {
            return Err(invalid("embedding must be nonempty"));
        }
        let mut upper = Vec::with_capacity(packed_len(dim));
        for (i, pi) in phi.iter().enumerate() {
            upper.extend(phi[i..].iter().map(|pj| pi * pj));
        }
        Ok(Self { upper, dim, t: 1 })
    }

    /// Rebuilds a matrix from a dense row-major array, checking shape and symmetry.
    pub fn from_parts(dim: usize, dense: Vec<f64>, t: u64) -> Result<Self> {
        if dim == 0 || dense.len() != dim * dim {
            return Err(invalid(format!(
                "density matrix of dimension {dim} needs {} entries, got {}",
                dim * dim,
                dense.len()
            )));
        }
        for i in 0..dim {
            for j in i + 1..dim {
                if (dense[i * dim + j] - dense[j * dim + i]).abs() > 1e-10 {
                    return Err(invalid("density matrix is not symmetric"));
                }
            }
        }
        let mut upper = Vec::with_capacity(packed_len(dim));
        for (i, row) in dense.chunks_exact(dim).enumerate() {
            upper.extend_from_slice(&row[i..]);
        }
        Self::from_packed(dim, upper, t)
    }

    /// Rebuilds a matrix from its packed upper triangle.
    pub fn from_packed(dim: usize, upper: Vec<f64>, t: u64) -> Result<Self> {
        if dim == 0 || upper.len() != packed_len(dim) {
            return Err(invalid(format!(
                "packed density matrix of dimension {dim} needs {} entries, got {}",
                packed_len(dim),
                upper.len()
            )));
        }
        if upper.iter().any(|v| !v.is_finite()) {
            return Err(invalid("density matrix entries must be finite"));
        }
        Ok(Self { upper, dim, t })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of points absorbed so far.
    pub fn t(&self) -> u64 {
        self.t
    }

    /// The upper triangle, row by row.
    pub fn as_packed(&self) -> &[f64] {
        &self.upper
    }

    /// The full matrix, row-major.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = self.get(i, j);
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.upper[self.row_start(i) + j - i]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Heap bytes held by the matrix storage.
    pub fn heap_bytes(&self) -> usize {
        self.upper.capacity() * std::mem::size_of::<f64>()
    }

    fn row_start(&self, i: usize) -> usize {
        i * self.dim - i * i.saturating_sub(1) / 2
    }

    fn rows_mut(&mut self) -> impl Iterator<Item = (usize, &mut [f64])> {
        let dim = self.dim;
        let mut rest = self.upper.as_mut_slice();
        (0..dim).map(move |i| {
            let (row, tail) = std::mem::take(&mut rest).split_at_mut(dim - i);
            rest = tail;
            (i, row)
        })
    }

    /// Unnormalized quadratic form `phi^T rho phi`.
    pub fn quadratic_form(&self, phi: &[f64]) -> Result<f64> {
        self.check_len(phi)?;
        let mut total = 0.0;
        let mut start = 0;
        for (i, pi) in phi.iter().enumerate() {
            let row = &self.upper[start..start + self.dim - i];
            start += row.len();
            total += pi * (row[0] * pi + 2.0 * dot(&row[1..], &phi[i + 1..]));
        }
        Ok(total)
    }

    /// Density score `phi^T rho phi / m_sigma`.
    pub fn measure(&self, phi: &[f64], m_sigma: f64) -> Result<f64> {
        measure(self, phi, m_sigma)
    }

    /// Absorbs one embedding: `rho <- (1 - alpha) rho + alpha phi phi^T`, `t += 1`.
    pub fn update(&mut self, phi: &[f64], alpha: f64) -> Result<()> {
        self.check_len(phi)?;
        check_alpha(alpha)?;
        let keep = 1.0 - alpha;
        for (i, row) in self.rows_mut() {
            let pi = phi[i];
            for (r, pj) in row.iter_mut().zip(&phi[i..]) {
                *r = keep * *r + alpha * (pi * pj);
            }
        }
        self.t += 1;
        Ok(())
    }

    /// Absorbs the same embedding `count` times in one `O(D^2)` pass.
    ///
    /// Equals `count` calls to [`update`](Self::update) up to rounding:
    /// `rho <- (1 - alpha)^count rho + (1 - (1 - alpha)^count) phi phi^T`.
    pub fn update_repeated(&mut self, phi: &[f64], alpha: f64, count: u64) -> Result<()> {
        self.check_len(phi)?;
        check_alpha(alpha)?;
        if count == 0 {
            return Ok(());
        }
        let exponent = i32::try_from(count).unwrap_or(i32::MAX);
        let keep = (1.0 - alpha).powi(exponent);
        let fresh = 1.0 - keep;
        for (i, row) in self.rows_mut() {
            let pi = phi[i];
            for (r, pj) in row.iter_mut().zip(&phi[i..]) {
                *r = keep * *r + fresh * (pi * pj);
            }
        }
        self.t += count;
        Ok(())
    }

    fn check_len(&self, phi: &[f64]) -> Result<()> {
        if phi.len() != self.dim {
            return Err(invalid(format!(
                "embedding has length {}, density matrix has dimension {}",
                phi.len(),
                self.dim
            )));
        }
        Ok(())
    }
}

/// Builds `rho` from an initial batch of embeddings.
pub fn init_density(embeddings: &[Vec<f64>], alpha: f64, mode: InitMode) -> Result<DensityMatrix> {
    let (first, rest) = embeddings
        .split_first()
        .ok_or_else(|| invalid("cannot initialize a density matrix from no embeddings"))?;
    check_alpha(alpha)?;
    let mut rho = DensityMatrix::rank_one(first)?;
    match mode {
        InitMode::Exponential => {
            for phi in rest {
                rho.update(phi, alpha)?;
            }
        }
        InitMode::Uniform => {
            // the i-th running mean is the blend with weight 1/i
            for (i, phi) in rest.iter().enumerate() {
                rho.update(phi, 1.0 / (i + 2) as f64)?;
            }
        }
    }
    Ok(rho)
}

/// Density score `phi^T rho phi / m_sigma`, clamping rounding-level negatives to zero.
pub fn measure(rho: &DensityMatrix, phi: &[f64], m_sigma: f64) -> Result<f64> {
    if !(m_sigma.is_finite() && m_sigma > 0.0) {
        return Err(invalid(format!("normalization constant must be positive, got {m_sigma}")));
    }
    let v = rho.quadratic_form(phi)? / m_sigma;
    if v < -PSD_SLACK {
        return Err(Error::PsdViolation { value: v });
    }
    Ok(v.max(0.0))
}

/// Out-of-place form of [`DensityMatrix::update`].
pub fn update(rho: &DensityMatrix, phi: &[f64], alpha: f64) -> Result<DensityMatrix> {
    let mut next = rho.clone();
    next.update(phi, alpha)?;
    Ok(next)
}

/// Weight of each absorbed point after `t` steps from `rho_1 = phi_1 phi_1^T`:
/// `q_1 = (1 - alpha)^(t-1)` and `q_i = alpha (1 - alpha)^(t-i)` for `i >= 2`.
pub fn reconstruct_weights(t: usize, alpha: f64) -> Result<Vec<f64>> {
    if t == 0 {
        return Err(invalid("t must be at least 1"));
    }
    check_alpha(alpha)?;
    let keep = 1.0 - alpha;
    let mut q = vec![0.0; t];
    // walk from the newest point backwards accumulating powers of (1 - alpha)
    let mut decay = 1.0;
    for i in (1..t).rev() {
        q[i] = alpha * decay;
        decay *= keep;
    }
    q[0] = decay;
    Ok(q)
}

/// Decay rate whose memory roughly matches a sliding window of `width` points.
pub fn alpha_for_window(width: usize) -> Result<f64> {
    if width < 2 {
        return Err(invalid("window width must be at least 2"));
    }
    Ok(2.0 / width as f64)
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(invalid(format!("decay rate must lie in [0, 1], got {alpha}")))
    }
}
