//! Python bindings. The extension imports as `inqmad`.

use inqmad::checkpoint;
use inqmad::data::StreamRecord;
use inqmad::detector::{self, Label};
use inqmad::{metrics, stats, trainer, DetectorParams, ThresholdMode, TrainConfig};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: inqmad::Error) -> PyErr {
    match e {
        inqmad::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_labels(labels: &[u8]) -> PyResult<Vec<Label>> {
    labels
        .iter()
        .map(|l| match l {
            0 => Ok(Label::Normal),
            1 => Ok(Label::Anomaly),
            other => Err(PyValueError::new_err(format!("labels must be 0 or 1, got {other}"))),
        })
        .collect()
}

#[pyfunction]
fn gaussian_kernel(x: Vec<f64>, y: Vec<f64>, sigma: f64) -> PyResult<f64> {
    inqmad::gaussian_kernel(&x, &y, sigma).map_err(py_err)
}

/// Random Fourier feature map.
#[pyclass(module = "inqmad")]
#[derive(Clone)]
struct FeatureMap {
    inner: inqmad::FeatureMap,
}

#[pymethods]
impl FeatureMap {
    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn offsets(&self) -> Vec<f64> {
        self.inner.offsets().to_vec()
    }

    fn embed(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.embed(&x).map_err(py_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        checkpoint::save_feature_map(&self.inner, path).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: checkpoint::load_feature_map(path).map_err(py_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "FeatureMap(input_dim={}, output_dim={}, sigma={})",
            self.inner.input_dim(),
            self.inner.output_dim(),
            self.inner.sigma()
        )
    }
}

#[pyfunction]
fn sample_rff(input_dim: usize, output_dim: usize, sigma: f64, seed: u64) -> PyResult<FeatureMap> {
    Ok(FeatureMap {
        inner: inqmad::sample_rff(input_dim, output_dim, sigma, seed).map_err(py_err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (train, sigma, output_dim, seed, lr_base=1e-3, lr_end=1e-7, epochs=10, batch_size=1, num_pairs=None))]
#[allow(clippy::too_many_arguments)]
fn train_aff(
    train: Vec<Vec<f64>>,
    sigma: f64,
    output_dim: usize,
    seed: u64,
    lr_base: f64,
    lr_end: f64,
    epochs: usize,
    batch_size: usize,
    num_pairs: Option<usize>,
) -> PyResult<FeatureMap> {
    let cfg = TrainConfig {
        lr_base,
        lr_end,
        epochs,
        batch_size,
        num_pairs,
        seed,
    };
    Ok(FeatureMap {
        inner: trainer::train_aff(&train, sigma, output_dim, &cfg).map_err(py_err)?,
    })
}

/// Keyword arguments shared by `Detector.fit` and `evaluate_stream`.
fn params_from(seed: u64, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<DetectorParams> {
    let mut p = DetectorParams::default();
    p.train.seed = seed;
    if let Some(kw) = kwargs {
        for (k, v) in kw.iter() {
            let key: String = k.extract()?;
            match key.as_str() {
                "n_init" => p.n_init = v.extract()?,
                "sigma" => p.sigma = v.extract()?,
                "alpha" => p.alpha = v.extract()?,
                "beta" => p.beta = v.extract()?,
                "dim" | "embedding_dim" => p.embedding_dim = v.extract()?,
                "lr_base" => p.train.lr_base = v.extract()?,
                "lr_end" => p.train.lr_end = v.extract()?,
                "epochs" => p.train.epochs = v.extract()?,
                "batch_size" => p.train.batch_size = v.extract()?,
                "num_pairs" => p.train.num_pairs = v.extract()?,
                "adaptive" => p.adaptive = v.extract()?,
                "m_sigma" => p.m_sigma = v.extract()?,
                "threshold_mode" => {
                    let s: String = v.extract()?;
                    p.threshold_mode = s.parse::<ThresholdMode>().map_err(py_err)?;
                }
                other => return Err(PyValueError::new_err(format!("unknown parameter {other:?}"))),
            }
        }
    }
    p.validate().map_err(py_err)?;
    Ok(p)
}

/// Fitted streaming detector.
#[pyclass(module = "inqmad")]
#[derive(Clone)]
struct Detector {
    inner: detector::DetectorState,
    #[pyo3(get)]
    init_scores: Vec<f64>,
}

#[pymethods]
impl Detector {
    /// Fits on the initialization window. `n_init` defaults to the window length.
    #[staticmethod]
    #[pyo3(signature = (train, seed, labels=None, **kwargs))]
    fn fit(
        train: Vec<Vec<f64>>,
        seed: u64,
        labels: Option<Vec<u8>>,
        kwargs: Option<&Bound<'_, PyDict>>,
    ) -> PyResult<Self> {
        let mut p = params_from(seed, kwargs)?;
        if !kwargs.is_some_and(|k| k.contains("n_init").unwrap_or(false)) {
            p.n_init = train.len();
        }
        let labels = labels.as_deref().map(to_labels).transpose()?;
        let out = detector::fit(&train, labels.as_deref(), &p).map_err(py_err)?;
        Ok(Self {
            inner: out.state,
            init_scores: out.init_scores,
        })
    }

    /// Returns `(label, score)` with label 1 for an anomaly.
    fn process(&mut self, x: Vec<f64>) -> PyResult<(u8, f64)> {
        let d = self.inner.process(&x).map_err(py_err)?;
        Ok((d.label.as_u8(), d.score))
    }

    fn score(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.score(&x).map_err(py_err)
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau()
    }

    #[getter]
    fn records_seen(&self) -> u64 {
        self.inner.records_seen()
    }

    #[getter]
    fn anomalies_flagged(&self) -> u64 {
        self.inner.anomalies_flagged()
    }

    #[getter]
    fn feature_map(&self) -> FeatureMap {
        FeatureMap {
            inner: self.inner.feature_map().clone(),
        }
    }

    fn save(&self, path: &str) -> PyResult<()> {
        checkpoint::save_detector(&self.inner, path).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: checkpoint::load_detector(path).map_err(py_err)?,
            init_scores: Vec::new(),
        })
    }
}

#[pyfunction]
fn auc_roc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    metrics::auc_roc(&scores, &to_labels(&labels)?).map_err(py_err)
}

/// Returns `(q, p_value)`.
#[pyfunction]
fn friedman_q(table: Vec<Vec<f64>>) -> PyResult<(f64, f64)> {
    let r = stats::friedman_q(&table).map_err(py_err)?;
    Ok((r.q, r.p_value))
}

#[pyfunction]
fn nemenyi(table: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    stats::nemenyi(&table).map_err(py_err)
}

/// Returns `(features, labels)` for the synthetic two-sine stream.
#[pyfunction]
fn generate_synthetic(n: usize, anomaly_rate: f64, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<u8>)> {
    let records = inqmad::data::generate_synthetic(n, anomaly_rate, seed).map_err(py_err)?;
    Ok(records
        .into_iter()
        .map(|r| (r.features, r.label.map_or(0, Label::as_u8)))
        .unzip())
}

/// Runs the fit-then-stream protocol and returns a dict with `auc`, `n_scored`,
/// `n_flagged`, `tau`, `throughput` and per-record `scores`.
#[pyfunction]
#[pyo3(signature = (features, labels, seed, **kwargs))]
fn evaluate_stream<'py>(
    py: Python<'py>,
    features: Vec<Vec<f64>>,
    labels: Vec<u8>,
    seed: u64,
    kwargs: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    if features.len() != labels.len() {
        return Err(PyValueError::new_err("features and labels differ in length"));
    }
    let params = params_from(seed, kwargs)?;
    let records: Vec<StreamRecord> = features
        .into_iter()
        .zip(to_labels(&labels)?)
        .enumerate()
        .map(|(i, (features, label))| StreamRecord {
            index: i as u64,
            features,
            label: Some(label),
        })
        .collect();
    let report = py.allow_threads(|| inqmad::eval::evaluate_stream(&records, &params)).map_err(py_err)?;
    let out = PyDict::new_bound(py);
    out.set_item("auc", report.auc)?;
    out.set_item("n_scored", report.n_scored)?;
    out.set_item("n_flagged", report.n_flagged)?;
    out.set_item("tau", report.tau)?;
    out.set_item("throughput", report.throughput)?;
    let scores: Vec<f64> = report.per_record_scores.iter().map(|r| r.score).collect();
    out.set_item("scores", scores)?;
    Ok(out)
}

#[pymodule]
#[pyo3(name = "inqmad")]
fn inqmad_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<FeatureMap>()?;
    m.add_class::<Detector>()?;
    m.add_function(wrap_pyfunction!(gaussian_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(sample_rff, m)?)?;
    m.add_function(wrap_pyfunction!(train_aff, m)?)?;
    m.add_function(wrap_pyfunction!(auc_roc, m)?)?;
    m.add_function(wrap_pyfunction!(friedman_q, m)?)?;
    m.add_function(wrap_pyfunction!(nemenyi, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_stream, m)?)?;
    Ok(())
}
