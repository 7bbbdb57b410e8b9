//! Flat `key=value` run configuration with command-line overrides.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use inqmad::DetectorParams;

/// Every key a config file may set. Flags use the same names with dashes.
pub const KEYS: &[&str] = &[
    "data",
    "label_column",
    "header",
    "synth_n",
    "synth_rate",
    "n_init",
    "sigma",
    "alpha",
    "beta",
    "dim",
    "lr_base",
    "lr_end",
    "epochs",
    "batch_size",
    "num_pairs",
    "seed",
    "threshold_mode",
    "adaptive",
    "ablation",
    "out",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key=value, got {line:?}", n + 1))?;
            let key = k.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                bail!("line {}: unknown key {key:?}", n + 1);
            }
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                bail!("line {}: key {key:?} is set twice", n + 1);
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("in config {}", p.display()))
            }
        }
    }

    /// Overrides `key` when the flag was given.
    pub fn set<T: Display>(&mut self, key: &str, value: Option<T>) {
        debug_assert!(KEYS.contains(&key));
        if let Some(v) = value {
            self.values.insert(key.to_string(), v.to_string());
        }
    }

    /// Records the value actually used, so the echoed file is complete.
    pub fn resolve<T: Display>(&mut self, key: &str, value: T) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow!("invalid value {v:?} for {key}: {e}")))
            .transpose()
    }

    pub fn seed(&self) -> Result<u64> {
        self.get("seed")?
            .ok_or_else(|| anyhow!("a seed is required: pass --seed or set seed= in the config file"))
    }

    /// Detector parameters with defaults filled in for absent keys.
    pub fn detector_params(&mut self) -> Result<DetectorParams> {
        let mut p = DetectorParams::default();
        macro_rules! take {
            ($key:literal, $field:expr) => {
                if let Some(v) = self.get($key)? {
                    $field = v;
                }
            };
        }
        take!("n_init", p.n_init);
        take!("sigma", p.sigma);
        take!("alpha", p.alpha);
        take!("beta", p.beta);
        take!("dim", p.embedding_dim);
        take!("lr_base", p.train.lr_base);
        take!("lr_end", p.train.lr_end);
        take!("epochs", p.train.epochs);
        take!("batch_size", p.train.batch_size);
        take!("adaptive", p.adaptive);
        take!("threshold_mode", p.threshold_mode);
        p.train.num_pairs = self.get("num_pairs")?;
        p.train.seed = self.seed()?;
        match self.raw("ablation") {
            None | Some("none") => {}
            Some("noadp") => p.adaptive = false,
            Some("d200") => p.embedding_dim = 200,
            Some(other) => bail!("unknown ablation {other:?}, expected noadp or d200"),
        }
        p.validate()?;

        self.resolve("n_init", p.n_init);
        self.resolve("sigma", p.sigma);
        self.resolve("alpha", p.alpha);
        self.resolve("beta", p.beta);
        self.resolve("dim", p.embedding_dim);
        self.resolve("lr_base", p.train.lr_base);
        self.resolve("lr_end", p.train.lr_end);
        self.resolve("epochs", p.train.epochs);
        self.resolve("batch_size", p.train.batch_size);
        self.resolve("adaptive", p.adaptive);
        self.resolve("threshold_mode", p.threshold_mode);
        Ok(p)
    }

    /// Writes the settings as a config file that reproduces the run.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        let mut text = String::new();
        for (k, v) in &self.values {
            if k != "ablation" || v != "none" {
                text.push_str(&format!("{k}={v}\n"));
            }
        }
        fs::write(dir.join("config.txt"), text).context("writing config echo")
    }
}

/// Parses a comma-separated list.
pub fn parse_list<T>(text: &str) -> Result<Vec<T>>
where
    T: FromStr,
    T::Err: Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| anyhow!("invalid list entry {s:?}: {e}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_overrides() {
        let mut s = Settings::parse("# comment\nsigma = 0.5\nn-init=32\nseed=3\n").unwrap();
        s.set("sigma", Some(0.25));
        s.set::<f64>("alpha", None);
        let p = s.detector_params().unwrap();
        assert_eq!(p.sigma, 0.25);
        assert_eq!(p.n_init, 32);
        assert_eq!(p.alpha, DetectorParams::default().alpha);
        assert_eq!(p.train.seed, 3);
        assert_eq!(s.raw("alpha"), Some("0.04"));
    }

    #[test]
    fn rejects_bad_files() {
        assert!(Settings::parse("nonsense").is_err());
        assert!(Settings::parse("colour=red").is_err());
        assert!(Settings::parse("seed=1\nseed=2").is_err());
        let mut s = Settings::parse("sigma=abc\nseed=1").unwrap();
        assert!(s.detector_params().is_err());
    }

    #[test]
    fn seed_is_mandatory() {
        let mut s = Settings::default();
        assert!(s.detector_params().unwrap_err().to_string().contains("seed"));
    }

    #[test]
    fn ablations() {
        let mut s = Settings::parse("seed=0\nablation=d200").unwrap();
        assert_eq!(s.detector_params().unwrap().embedding_dim, 200);
        let mut s = Settings::parse("seed=0\nablation=noadp").unwrap();
        assert!(!s.detector_params().unwrap().adaptive);
        let mut s = Settings::parse("seed=0\nablation=other").unwrap();
        assert!(s.detector_params().is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list::<usize>("64, 128,").unwrap(), vec![64, 128]);
        assert!(parse_list::<f64>("1,x").is_err());
    }
}
