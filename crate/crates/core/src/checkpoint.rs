//! Binary checkpoints for feature maps and full detector states.
//!
//! Layout (all integers `u64` and all reals `f64`, little-endian):
//!
//! ```text
//! magic   b"INQMAD\0\x01"
//! kind    u64          1 = feature map, 2 = detector state
//! feature map:
//!   input_dim, output_dim, sigma, weights[output_dim * input_dim], offsets[output_dim]
//! detector state (kind 2) continues with:
//!   rho_dim, t, rho[rho_dim * rho_dim], tau, alpha, m_sigma, records_seen, anomalies_flagged
//! ```
//!
//! Reals are stored bit for bit, so a restored state scores exactly like the
//! original.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::density::DensityMatrix;
use crate::detector::DetectorState;
use crate::error::{Error, Result};
use crate::feature_map::FeatureMap;

const MAGIC: &[u8; 8] = b"INQMAD\0\x01";
const KIND_FEATURE_MAP: u64 = 1;
const KIND_DETECTOR: u64 = 2;
// refuse absurd headers before allocating
const MAX_ELEMENTS: u64 = 1 << 32;

struct Out<W: Write>(W);

impl<W: Write> Out<W> {
    fn u64(&mut self, v: u64) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }

    fn f64(&mut self, v: f64) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }

    fn f64s(&mut self, vs: &[f64]) -> Result<()> {
        for v in vs {
            self.f64(*v)?;
        }
        Ok(())
    }
}

struct In<R: Read>(R);

impl<R: Read> In<R> {
    fn bytes8(&mut self) -> Result<[u8; 8]> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Checkpoint("file is truncated".into()),
            _ => Error::Io(e),
        })?;
        Ok(b)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes8()?))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        if v > MAX_ELEMENTS {
            return Err(Error::Checkpoint(format!("dimension {v} is implausibly large")));
        }
        Ok(v as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes8()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

fn write_header<W: Write>(out: &mut Out<W>, kind: u64) -> Result<()> {
    out.0.write_all(MAGIC)?;
    out.u64(kind)
}

fn read_header<R: Read>(inp: &mut In<R>, kind: u64) -> Result<()> {
    if &inp.bytes8()? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let got = inp.u64()?;
    if got != kind {
        return Err(Error::Checkpoint(format!("expected record kind {kind}, found {got}")));
    }
    Ok(())
}

fn write_fm_body<W: Write>(out: &mut Out<W>, fm: &FeatureMap) -> Result<()> {
    out.u64(fm.input_dim() as u64)?;
    out.u64(fm.output_dim() as u64)?;
    out.f64(fm.sigma())?;
    out.f64s(fm.weights())?;
    out.f64s(fm.offsets())
}

fn read_fm_body<R: Read>(inp: &mut In<R>) -> Result<FeatureMap> {
    let d = inp.usize()?;
    let dim = inp.usize()?;
    let sigma = inp.f64()?;
    let n = d
        .checked_mul(dim)
        .filter(|n| (*n as u64) <= MAX_ELEMENTS)
        .ok_or_else(|| Error::Checkpoint("feature map is implausibly large".into()))?;
    let weights = inp.f64s(n)?;
    let offsets = inp.f64s(dim)?;
    FeatureMap::new(d, dim, sigma, weights, offsets).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn write_feature_map<W: Write>(fm: &FeatureMap, w: W) -> Result<()> {
    let mut out = Out(w);
    write_header(&mut out, KIND_FEATURE_MAP)?;
    write_fm_body(&mut out, fm)?;
    Ok(out.0.flush()?)
}

pub fn read_feature_map<R: Read>(r: R) -> Result<FeatureMap> {
    let mut inp = In(r);
    read_header(&mut inp, KIND_FEATURE_MAP)?;
    read_fm_body(&mut inp)
}

pub fn write_detector<W: Write>(state: &DetectorState, w: W) -> Result<()> {
    let mut out = Out(w);
    write_header(&mut out, KIND_DETECTOR)?;
    write_fm_body(&mut out, state.feature_map())?;
    let rho = state.density();
    out.u64(rho.dim() as u64)?;
    out.u64(rho.t())?;
    // upper triangle, row by row
    out.f64s(rho.as_packed())?;
    out.f64(state.tau())?;
    out.f64(state.alpha())?;
    out.f64(state.m_sigma())?;
    out.u64(state.records_seen())?;
    out.u64(state.anomalies_flagged())?;
    Ok(out.0.flush()?)
}

pub fn read_detector<R: Read>(r: R) -> Result<DetectorState> {
    let mut inp = In(r);
    read_header(&mut inp, KIND_DETECTOR)?;
    let fm = read_fm_body(&mut inp)?;
    let dim = inp.usize()?;
    let t = inp.u64()?;
    let n = dim
        .checked_mul(dim.saturating_add(1))
        .map(|n| n / 2)
        .filter(|n| (*n as u64) <= MAX_ELEMENTS)
        .ok_or_else(|| Error::Checkpoint("density matrix is implausibly large".into()))?;
    let rho = DensityMatrix::from_packed(dim, inp.f64s(n)?, t).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let tau = inp.f64()?;
    let alpha = inp.f64()?;
    let m_sigma = inp.f64()?;
    let records_seen = inp.u64()?;
    let anomalies_flagged = inp.u64()?;
    DetectorState::new(fm, rho, tau, alpha, m_sigma, records_seen, anomalies_flagged)
        .map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save_detector(state: &DetectorState, path: impl AsRef<Path>) -> Result<()> {
    write_detector(state, BufWriter::new(File::create(path)?))
}

pub fn load_detector(path: impl AsRef<Path>) -> Result<DetectorState> {
    read_detector(BufReader::new(File::open(path)?))
}

pub fn save_feature_map(fm: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    write_feature_map(fm, BufWriter::new(File::create(path)?))
}

pub fn load_feature_map(path: impl AsRef<Path>) -> Result<FeatureMap> {
    read_feature_map(BufReader::new(File::open(path)?))
}
