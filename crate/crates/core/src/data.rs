//! Stream records: CSV ingestion, min-max scaling and the synthetic sine stream.

use std::ops::Range;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::detector::Label;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StreamRecord {
    pub index: u64,
    pub features: Vec<f64>,
    pub label: Option<Label>,
}

/// Reads a numeric CSV in file order.
///
/// `label_column` is a header name, or a zero-based column index when the file has
/// no header. Label cells must be `0` (normal) or `1` (anomaly).
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>, has_header: bool) -> Result<Vec<StreamRecord>> {
    let path = path.as_ref();
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;

    let label_idx = match label_column {
        None => None,
        Some(name) if has_header => {
            let headers = reader.headers().map_err(|e| csv_error(path, e))?;
            Some(
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| parse_err(1, format!("no column named {name:?}")))?,
            )
        }
        Some(idx) => Some(idx.parse::<usize>().map_err(|_| {
            invalid(format!("label column {idx:?} must be an index when the file has no header"))
        })?),
    };

    let mut width = None;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let w = *width.get_or_insert(row.len());
        if row.len() != w {
            return Err(parse_err(line, format!("expected {w} fields, found {}", row.len())));
        }
        if let Some(li) = label_idx {
            if li >= w {
                return Err(parse_err(line, format!("label column {li} out of range for {w} fields")));
            }
        }
        let mut features = Vec::with_capacity(w);
        let mut label = None;
        for (c, cell) in row.iter().enumerate() {
            if Some(c) == label_idx {
                label = Some(parse_label(cell).map_err(|m| parse_err(line, m))?);
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("column {c}: {cell:?} is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column {c}: {cell:?} is not finite")));
            }
            features.push(v);
        }
        if features.is_empty() {
            return Err(parse_err(line, "row has no feature columns".into()));
        }
        out.push(StreamRecord {
            index: out.len() as u64,
            features,
            label,
        });
    }
    Ok(out)
}

fn parse_label(cell: &str) -> std::result::Result<Label, String> {
    match cell.parse::<f64>() {
        Ok(v) if v == 0.0 => Ok(Label::Normal),
        Ok(v) if v == 1.0 => Ok(Label::Anomaly),
        _ => Err(format!("unknown label {cell:?}, expected 0 or 1")),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Per-feature affine map fitted on a window.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxTransform {
    pub min: Vec<f64>,
    /// `max - min`; zero marks a constant feature.
    pub span: Vec<f64>,
}

impl MinMaxTransform {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| invalid("cannot fit a transform on no rows"))?;
        let d = first.len();
        let mut min = first.clone();
        let mut max = first.clone();
        for r in rows {
            if r.len() != d {
                return Err(invalid("rows have inconsistent lengths"));
            }
            for (l, v) in r.iter().enumerate() {
                min[l] = min[l].min(*v);
                max[l] = max[l].max(*v);
            }
        }
        let span = max.iter().zip(&min).map(|(hi, lo)| hi - lo).collect();
        Ok(Self { min, span })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Fitted rows land in `[0, 1]`; constant features map to 0.5.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.span))
            .map(|(v, (lo, s))| if *s > 0.0 { (v - lo) / s } else { 0.5 })
            .collect()
    }

    /// Inverse map. Constant features come back as their fitted value.
    pub fn invert(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.min.iter().zip(&self.span))
            .map(|(v, (lo, s))| if *s > 0.0 { v * s + lo } else { *lo })
            .collect()
    }
}

/// Fits min-max scaling on `fit_on` and applies it to every record.
pub fn normalize_minmax(records: &[StreamRecord], fit_on: Range<usize>) -> Result<(Vec<StreamRecord>, MinMaxTransform)> {
    if fit_on.is_empty() || fit_on.end > records.len() {
        return Err(invalid(format!(
            "fit range {fit_on:?} is empty or exceeds {} records",
            records.len()
        )));
    }
    let window: Vec<Vec<f64>> = records[fit_on].iter().map(|r| r.features.clone()).collect();
    let transform = MinMaxTransform::fit(&window)?;
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        if r.features.len() != transform.dim() {
            return Err(invalid(format!("record {} has the wrong number of features", r.index)));
        }
        out.push(StreamRecord {
            features: transform.apply(&r.features),
            ..r.clone()
        });
    }
    Ok((out, transform))
}

/// Recipe for the one-dimensional two-sine stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub omega1: f64,
    pub omega2: f64,
    /// Standard deviation of the noise added to anomalous points.
    pub noise_sd: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        // noise is three times the unit amplitude of each wave
        Self {
            omega1: 0.02,
            omega2: 0.005,
            noise_sd: 3.0,
        }
    }
}

/// `sin(omega1 i) + sin(omega2 i)`, with `round(n * anomaly_rate)` uniformly chosen
/// points shifted by Gaussian noise and labeled anomalous.
pub fn generate_synthetic(n: usize, anomaly_rate: f64, seed: u64) -> Result<Vec<StreamRecord>> {
    generate_synthetic_with(n, anomaly_rate, seed, &SyntheticConfig::default())
}

pub fn generate_synthetic_with(
    n: usize,
    anomaly_rate: f64,
    seed: u64,
    cfg: &SyntheticConfig,
) -> Result<Vec<StreamRecord>> {
    if n == 0 {
        return Err(invalid("synthetic stream needs at least one record"));
    }
    if !(0.0..1.0).contains(&anomaly_rate) {
        return Err(invalid(format!("anomaly rate must lie in [0, 1), got {anomaly_rate}")));
    }
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_anom = (n as f64 * anomaly_rate).round() as usize;
    let mut is_anom = vec![false; n];
    for i in index::sample(&mut rng, n, n_anom) {
        is_anom[i] = true;
    }
    Ok((0..n)
        .map(|i| {
            let t = i as f64;
            let mut v = (cfg.omega1 * t).sin() + (cfg.omega2 * t).sin();
            let label = if is_anom[i] {
                v += noise.sample(&mut rng);
                Label::Anomaly
            } else {
                Label::Normal
            };
            StreamRecord {
                index: i as u64,
                features: vec![v],
                label: Some(label),
            }
        })
        .collect())
}

/// Writes records as CSV with a `label` column when any record carries one.
pub fn write_csv<W: std::io::Write>(records: &[StreamRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = records.first().map_or(0, |r| r.features.len());
    let labeled = records.iter().any(|r| r.label.is_some());
    let mut header: Vec<String> = (0..d).map(|l| format!("x{l}")).collect();
    if labeled {
        header.push("label".into());
    }
    w.write_record(&header).map_err(|e| Error::Io(e.into()))?;
    for r in records {
        let mut row: Vec<String> = r.features.iter().map(|v| format!("{v:.16e}")).collect();
        if labeled {
            row.push(r.label.map_or(String::new(), |l| l.as_u8().to_string()));
        }
        w.write_record(&row).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}
