//! The streaming detector: fit on an initialization window, then score and
//! conditionally absorb each arriving record.

use std::fmt;
use std::str::FromStr;

use crate::density::{check_alpha, DensityMatrix};
use crate::error::{invalid, Error, Result};
use crate::feature_map::{check_sigma, sample_rff, FeatureMap};
use crate::trainer::{train_aff, TrainConfig};

/// Embedding size used unless configured otherwise.
pub const DEFAULT_EMBEDDING_DIM: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Normal,
    Anomaly,
}

impl Label {
    pub fn is_anomaly(self) -> bool {
        self == Label::Anomaly
    }

    /// `0` for normal, `1` for anomaly.
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Normal => 0,
            Label::Anomaly => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Normal => "normal",
            Label::Anomaly => "anomaly",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMode {
    /// Lower `beta`-quantile of the initialization scores.
    #[default]
    Quantile,
    /// Operating point with the best balanced accuracy on the labeled window.
    BestAuc,
}

impl FromStr for ThresholdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantile" => Ok(Self::Quantile),
            "best_auc" | "best-auc" => Ok(Self::BestAuc),
            other => Err(invalid(format!("unknown threshold mode {other:?}"))),
        }
    }
}

impl fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Quantile => "quantile",
            Self::BestAuc => "best_auc",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    pub n_init: usize,
    pub sigma: f64,
    pub alpha: f64,
    /// Expected anomaly proportion, used by [`ThresholdMode::Quantile`].
    pub beta: f64,
    pub embedding_dim: usize,
    pub threshold_mode: ThresholdMode,
    pub train: TrainConfig,
    /// `false` skips gradient training and uses the random initialization as is.
    pub adaptive: bool,
    pub m_sigma: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            n_init: 64,
            sigma: 0.1,
            alpha: 0.04,
            beta: 0.1,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            threshold_mode: ThresholdMode::Quantile,
            train: TrainConfig::default(),
            adaptive: true,
            m_sigma: 1.0,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_init < 2 {
            return Err(invalid(format!("n_init must be at least 2, got {}", self.n_init)));
        }
        check_sigma(self.sigma)?;
        check_alpha(self.alpha)?;
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(invalid(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if self.embedding_dim == 0 {
            return Err(invalid("embedding dimension must be positive"));
        }
        if !(self.m_sigma.is_finite() && self.m_sigma > 0.0) {
            return Err(invalid("m_sigma must be positive"));
        }
        self.train.validate()
    }
}

/// Everything needed to keep scoring a stream.
#[derive(Debug, Clone)]
pub struct DetectorState {
    pub(crate) feature_map: FeatureMap,
    pub(crate) rho: DensityMatrix,
    pub(crate) tau: f64,
    pub(crate) alpha: f64,
    pub(crate) m_sigma: f64,
    pub(crate) records_seen: u64,
    pub(crate) anomalies_flagged: u64,
    scratch: Vec<f64>,
}

impl PartialEq for DetectorState {
    fn eq(&self, other: &Self) -> bool {
        self.feature_map == other.feature_map
            && self.rho == other.rho
            && self.tau == other.tau
            && self.alpha == other.alpha
            && self.m_sigma == other.m_sigma
            && self.records_seen == other.records_seen
            && self.anomalies_flagged == other.anomalies_flagged
    }
}

/// Outcome of [`DetectorState::process`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub label: Label,
    pub score: f64,
}

/// A fitted state together with the scores recorded while building it.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub state: DetectorState,
    pub init_scores: Vec<f64>,
}

impl DetectorState {
    pub fn new(
        feature_map: FeatureMap,
        rho: DensityMatrix,
        tau: f64,
        alpha: f64,
        m_sigma: f64,
        records_seen: u64,
        anomalies_flagged: u64,
    ) -> Result<Self> {
        if feature_map.output_dim() != rho.dim() {
            return Err(invalid(format!(
                "feature map produces {} features but the density matrix has dimension {}",
                feature_map.output_dim(),
                rho.dim()
            )));
        }
        if !tau.is_finite() {
            return Err(invalid("threshold must be finite"));
        }
        check_alpha(alpha)?;
        if !(m_sigma.is_finite() && m_sigma > 0.0) {
            return Err(invalid("m_sigma must be positive"));
        }
        if anomalies_flagged > records_seen {
            return Err(invalid("more anomalies flagged than records seen"));
        }
        let scratch = vec![0.0; rho.dim()];
        Ok(Self {
            feature_map,
            rho,
            tau,
            alpha,
            m_sigma,
            records_seen,
            anomalies_flagged,
            scratch,
        })
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.feature_map
    }

    pub fn density(&self) -> &DensityMatrix {
        &self.rho
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn m_sigma(&self) -> f64 {
        self.m_sigma
    }

    pub fn records_seen(&self) -> u64 {
        self.records_seen
    }

    pub fn anomalies_flagged(&self) -> u64 {
        self.anomalies_flagged
    }

    pub fn input_dim(&self) -> usize {
        self.feature_map.input_dim()
    }

    /// Rescales the normalization constant and the threshold together.
    pub fn rescale(&mut self, m_sigma: f64, tau: f64) -> Result<()> {
        if !(m_sigma.is_finite() && m_sigma > 0.0) || !tau.is_finite() {
            return Err(invalid("m_sigma must be positive and tau finite"));
        }
        self.m_sigma = m_sigma;
        self.tau = tau;
        Ok(())
    }

    /// Folds `x` in `count` times as a normal record without scoring it, in
    /// constant time. Equivalent (to rounding) to `count` accepted `process` calls.
    pub fn absorb_repeated(&mut self, x: &[f64], count: u64) -> Result<()> {
        check_finite(x)?;
        let phi = self.feature_map.embed(x)?;
        self.rho.update_repeated(&phi, self.alpha, count)?;
        self.records_seen += count;
        Ok(())
    }

    /// Bytes of heap memory held by the state; constant over a stream.
    pub fn heap_bytes(&self) -> usize {
        self.rho.heap_bytes()
            + (self.feature_map.weights.capacity()
                + self.feature_map.offsets.capacity()
                + self.scratch.capacity())
                * std::mem::size_of::<f64>()
    }

    /// Density score of `x` without touching the state.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        check_finite(x)?;
        let phi = self.feature_map.embed(x)?;
        self.rho.measure(&phi, self.m_sigma)
    }

    /// Scores `x`, labels it against `tau`, and absorbs it when it is normal.
    ///
    /// A score equal to `tau` counts as normal. Anomalies leave `rho` untouched.
    /// On error the state is unchanged.
    pub fn process(&mut self, x: &[f64]) -> Result<Decision> {
        check_finite(x)?;
        self.feature_map.embed_into(x, &mut self.scratch)?;
        let score = self.rho.measure(&self.scratch, self.m_sigma)?;
        let label = if score >= self.tau {
            self.rho.update(&self.scratch, self.alpha)?;
            Label::Normal
        } else {
            self.anomalies_flagged += 1;
            Label::Anomaly
        };
        self.records_seen += 1;
        Ok(Decision { label, score })
    }
}

fn check_finite(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::InvalidInput(format!("feature {i} is not finite ({})", x[i]))),
        None => Ok(()),
    }
}

/// Builds the detector from the initialization window.
///
/// Trains (or just samples) the feature map, folds the window into `rho` with the
/// decay blend while recording each point's score right after it is absorbed,
/// and derives `tau` from those scores.
pub fn fit(train: &[Vec<f64>], labels: Option<&[Label]>, params: &DetectorParams) -> Result<FitOutcome> {
    let label_slice = check_fit_inputs(train, labels, params)?;
    let feature_map = if params.adaptive {
        train_aff(train, params.sigma, params.embedding_dim, &params.train)?
    } else {
        sample_rff(train[0].len(), params.embedding_dim, params.sigma, params.train.seed)?
    };
    absorb_window(train, label_slice, params, feature_map)
}

/// [`fit`] with a caller-supplied feature map in place of training or sampling one.
///
/// The map must match the window's input dimension and `params.embedding_dim`.
pub fn fit_with_feature_map(
    train: &[Vec<f64>],
    labels: Option<&[Label]>,
    params: &DetectorParams,
    feature_map: FeatureMap,
) -> Result<FitOutcome> {
    let label_slice = check_fit_inputs(train, labels, params)?;
    if feature_map.input_dim() != train[0].len() || feature_map.output_dim() != params.embedding_dim {
        return Err(invalid(format!(
            "feature map is {}->{}, window needs {}->{}",
            feature_map.input_dim(),
            feature_map.output_dim(),
            train[0].len(),
            params.embedding_dim
        )));
    }
    absorb_window(train, label_slice, params, feature_map)
}

fn absorb_window(
    train: &[Vec<f64>],
    label_slice: Option<&[Label]>,
    params: &DetectorParams,
    feature_map: FeatureMap,
) -> Result<FitOutcome> {
    let mut phi = vec![0.0; params.embedding_dim];
    let mut rho: Option<DensityMatrix> = None;
    let mut init_scores = Vec::with_capacity(train.len());
    for x in train {
        feature_map.embed_into(x, &mut phi)?;
        let r = match rho.as_mut() {
            None => rho.insert(DensityMatrix::rank_one(&phi)?),
            Some(r) => {
                r.update(&phi, params.alpha)?;
                r
            }
        };
        init_scores.push(r.measure(&phi, params.m_sigma)?);
    }
    let rho = rho.expect("window has at least two rows");

    let tau = match label_slice {
        None => threshold_by_quantile(&init_scores, params.beta)?,
        Some(labels) => threshold_by_auc(&init_scores, labels)?,
    };
    let state = DetectorState::new(feature_map, rho, tau, params.alpha, params.m_sigma, 0, 0)?;
    Ok(FitOutcome { state, init_scores })
}

fn check_fit_inputs<'a>(
    train: &[Vec<f64>],
    labels: Option<&'a [Label]>,
    params: &DetectorParams,
) -> Result<Option<&'a [Label]>> {
    params.validate()?;
    if train.len() != params.n_init {
        return Err(invalid(format!(
            "initialization window has {} rows, n_init is {}",
            train.len(),
            params.n_init
        )));
    }
    for row in train {
        check_finite(row)?;
    }
    if let Some(labels) = labels {
        if labels.len() != train.len() {
            return Err(invalid("labels and training rows differ in length"));
        }
    }
    Ok(match params.threshold_mode {
        ThresholdMode::Quantile => None,
        ThresholdMode::BestAuc => Some(labels.ok_or_else(|| {
            invalid("best_auc thresholding needs labels for the initialization window")
        })?),
    })
}

/// Lower `beta`-quantile with linear interpolation between order statistics.
pub fn threshold_by_quantile(scores: &[f64], beta: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(invalid("cannot take a quantile of no scores"));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(invalid(format!("quantile level must lie in [0, 1], got {beta}")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(invalid("scores contain NaN"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * beta;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Threshold maximizing balanced accuracy on a labeled score sample.
///
/// Candidates are the midpoints between consecutive distinct scores plus one cut
/// below everything (no flags) and one above everything (all flagged). Ties go to
/// the larger threshold.
pub fn threshold_by_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(invalid("scores and labels differ in length"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(invalid("scores must be finite"));
    }
    let n_anom = labels.iter().filter(|l| l.is_anomaly()).count();
    let n_norm = labels.len() - n_anom;
    if n_anom == 0 || n_norm == 0 {
        return Err(Error::DegenerateLabels(
            "threshold selection needs both normal and anomalous examples".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let balanced = |anom_below: usize, norm_below: usize| {
        let tpr = anom_below as f64 / n_anom as f64;
        let tnr = (n_norm - norm_below) as f64 / n_norm as f64;
        0.5 * (tpr + tnr)
    };
    let lowest = scores[order[0]];
    let highest = scores[order[order.len() - 1]];

    let mut best_tau = lowest;
    let mut best = balanced(0, 0);
    let (mut anom_below, mut norm_below) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        // move the whole block of tied scores below the cut at once
        let v = scores[order[i]];
        while i < order.len() && scores[order[i]] == v {
            if labels[order[i]].is_anomaly() {
                anom_below += 1;
            } else {
                norm_below += 1;
            }
            i += 1;
        }
        let tau = if i < order.len() {
            0.5 * (v + scores[order[i]])
        } else {
            above(highest)
        };
        let ba = balanced(anom_below, norm_below);
        if ba >= best {
            best = ba;
            best_tau = tau;
        }
    }
    Ok(best_tau)
}

fn above(v: f64) -> f64 {
    v + v.abs().max(1.0) * 1e-9
}
