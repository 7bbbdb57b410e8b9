//! Streaming evaluation protocol and parameter grid search.
//!
//! A run scales features with min-max bounds taken from the first `n_init`
//! records, fits the detector on those records, then streams the rest one at a
//! time. AUC is computed over the streamed part only, with `-score` as the
//! anomaly score since a low density means "more anomalous".

use std::time::Instant;

use crate::data::{normalize_minmax, StreamRecord};
use crate::detector::{fit, DetectorParams, Label};
use crate::error::{invalid, Result};
use crate::metrics::{auc_roc, roc_points};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordScore {
    pub index: u64,
    /// Density score; low values are anomalous.
    pub score: f64,
    pub predicted: Label,
    pub truth: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub auc: f64,
    pub n_scored: usize,
    pub n_flagged: usize,
    pub tau: f64,
    /// Records per second over the streaming phase.
    pub throughput: f64,
    pub per_record_scores: Vec<RecordScore>,
}

impl EvalReport {
    /// ROC vertices with anomalies as positives, for plotting.
    pub fn roc(&self) -> Result<Vec<(f64, f64)>> {
        let (scores, labels) = self.anomaly_scores();
        roc_points(&scores, &labels)
    }

    fn anomaly_scores(&self) -> (Vec<f64>, Vec<Label>) {
        self.per_record_scores.iter().map(|r| (-r.score, r.truth)).unzip()
    }

    /// Equality ignoring the wall-clock throughput.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.auc == other.auc
            && self.n_scored == other.n_scored
            && self.n_flagged == other.n_flagged
            && self.tau == other.tau
            && self.per_record_scores == other.per_record_scores
    }
}

/// Runs the fit-then-stream protocol on a fully labeled stream.
pub fn evaluate_stream(records: &[StreamRecord], params: &DetectorParams) -> Result<EvalReport> {
    params.validate()?;
    if records.len() <= params.n_init {
        return Err(invalid(format!(
            "stream has {} records, need more than n_init = {}",
            records.len(),
            params.n_init
        )));
    }
    let truth: Vec<Label> = records
        .iter()
        .map(|r| r.label.ok_or_else(|| invalid(format!("record {} has no label", r.index))))
        .collect::<Result<_>>()?;
    let (scaled, _) = normalize_minmax(records, 0..params.n_init)?;
    let (init, rest) = scaled.split_at(params.n_init);

    let window: Vec<Vec<f64>> = init.iter().map(|r| r.features.clone()).collect();
    let mut state = fit(&window, Some(&truth[..params.n_init]), params)?.state;

    let mut per_record_scores = Vec::with_capacity(rest.len());
    let started = Instant::now();
    for (r, t) in rest.iter().zip(&truth[params.n_init..]) {
        let d = state.process(&r.features)?;
        per_record_scores.push(RecordScore {
            index: r.index,
            score: d.score,
            predicted: d.label,
            truth: *t,
        });
    }
    let elapsed = started.elapsed().as_secs_f64();

    let mut report = EvalReport {
        auc: 0.0,
        n_scored: per_record_scores.len(),
        n_flagged: per_record_scores.iter().filter(|r| r.predicted.is_anomaly()).count(),
        tau: state.tau(),
        throughput: per_record_scores.len() as f64 / elapsed.max(f64::MIN_POSITIVE),
        per_record_scores,
    };
    let (scores, labels) = report.anomaly_scores();
    report.auc = auc_roc(&scores, &labels)?;
    Ok(report)
}

/// Values to try for each searched parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub n_init: Vec<usize>,
    pub lr_base: Vec<f64>,
    pub sigma: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl GridSpec {
    /// Initialization sizes searched when tuning.
    pub const N_INIT_VALUES: [usize; 8] = [64, 128, 256, 512, 1000, 2000, 2048, 5000];
    /// Starting learning rates searched when tuning.
    pub const LR_BASE_VALUES: [f64; 3] = [1e-2, 1e-3, 1e-4];

    /// The standard `n_init` and `lr_base` sets with caller-chosen `sigma` and `alpha`.
    pub fn standard(sigma: Vec<f64>, alpha: Vec<f64>) -> Self {
        Self {
            n_init: Self::N_INIT_VALUES.to_vec(),
            lr_base: Self::LR_BASE_VALUES.to_vec(),
            sigma,
            alpha,
        }
    }

    /// All combinations with `n_init < stream_len`, in a fixed nested order.
    pub fn combinations(&self, stream_len: usize) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &n_init in self.n_init.iter().filter(|n| **n < stream_len) {
            for &lr_base in &self.lr_base {
                for &sigma in &self.sigma {
                    for &alpha in &self.alpha {
                        out.push(GridPoint {
                            n_init,
                            lr_base,
                            sigma,
                            alpha,
                        });
                    }
                }
            }
        }
        out
    }

    fn is_empty(&self) -> bool {
        self.n_init.is_empty() || self.lr_base.is_empty() || self.sigma.is_empty() || self.alpha.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub n_init: usize,
    pub lr_base: f64,
    pub sigma: f64,
    pub alpha: f64,
}

impl GridPoint {
    pub fn apply(&self, base: &DetectorParams) -> DetectorParams {
        let mut p = base.clone();
        p.n_init = self.n_init;
        p.sigma = self.sigma;
        p.alpha = self.alpha;
        p.train.lr_base = self.lr_base;
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridRow {
    pub point: GridPoint,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub best: GridRow,
    pub best_params: DetectorParams,
    pub rows: Vec<GridRow>,
}

pub fn grid_search(records: &[StreamRecord], grid: &GridSpec, base: &DetectorParams) -> Result<GridOutcome> {
    grid_search_with(records, grid, base, &[], |_| Ok(()))
}

/// Grid search that reuses rows from an earlier run and reports each new row.
///
/// Points found in `completed` are not re-evaluated. `on_row` sees every freshly
/// computed row in evaluation order, which lets callers append results as they go.
pub fn grid_search_with(
    records: &[StreamRecord],
    grid: &GridSpec,
    base: &DetectorParams,
    completed: &[GridRow],
    mut on_row: impl FnMut(&GridRow) -> Result<()>,
) -> Result<GridOutcome> {
    if grid.is_empty() {
        return Err(invalid("parameter grid is empty"));
    }
    let points = grid.combinations(records.len());
    if points.is_empty() {
        return Err(invalid("no grid point has n_init smaller than the stream"));
    }
    let mut rows = Vec::with_capacity(points.len());
    for point in points {
        let row = match completed.iter().find(|r| r.point == point) {
            Some(done) => *done,
            None => {
                let report = evaluate_stream(records, &point.apply(base))?;
                let row = GridRow { point, auc: report.auc };
                on_row(&row)?;
                row
            }
        };
        rows.push(row);
    }
    let best = *rows
        .iter()
        .reduce(|best, r| if better(r, best) { r } else { best })
        .expect("at least one row");
    Ok(GridOutcome {
        best,
        best_params: best.point.apply(base),
        rows,
    })
}

// higher AUC, then smaller n_init, then smaller alpha
fn better(a: &GridRow, b: &GridRow) -> bool {
    a.auc
        .total_cmp(&b.auc)
        .then(b.point.n_init.cmp(&a.point.n_init))
        .then(b.point.alpha.total_cmp(&a.point.alpha))
        .is_gt()
}
