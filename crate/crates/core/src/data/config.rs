//! Run configuration: flat `key = value` files, command-line overrides and
//! defaults, in increasing order of precedence: defaults, file, flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{read_text, Error, Result};
use crate::model::{plan_dilations, LayerConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err(Error::config("precision", format!("must be f32 or f64, got `{s}`"))),
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub p: usize,
    pub q: usize,
    pub d: usize,
    pub k: usize,
    pub delta_pdf: f64,
    pub delta_adt: f64,
    pub beta: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub precision: Precision,
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub data: Option<PathBuf>,
    pub distances: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Overrides the standard deviation of the listed distances.
    pub sigma: Option<f64>,
    /// Overrides the planned dilation schedule.
    pub dilations: Option<Vec<usize>>,
    pub target_channel: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub strict: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            p: 12,
            q: 12,
            d: 64,
            k: 3,
            delta_pdf: 0.5,
            delta_adt: 0.5,
            beta: 1.0,
            lr: 0.001,
            batch_size: 64,
            epochs: 200,
            seed: 0,
            precision: Precision::F64,
            train_frac: 0.6,
            val_frac: 0.2,
            test_frac: 0.2,
            data: None,
            distances: None,
            out: None,
            sigma: None,
            dilations: None,
            target_channel: 0,
            grad_clip: 0.0,
            strict: true,
        }
    }
}

pub const KEYS: &[&str] = &[
    "p",
    "q",
    "d",
    "k",
    "delta_pdf",
    "delta_adt",
    "beta",
    "lr",
    "batch_size",
    "epochs",
    "seed",
    "precision",
    "train_frac",
    "val_frac",
    "test_frac",
    "data",
    "distances",
    "out",
    "sigma",
    "dilations",
    "target_channel",
    "grad_clip",
    "strict",
];

fn parse<T: FromStr>(key: &str, value: &str, what: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("expected {what}, got `{value}`")))
}

fn at_least(key: &str, value: &str, min: usize) -> Result<usize> {
    let v: usize = parse(key, value, "a non-negative integer")?;
    if v < min {
        return Err(Error::config(key, format!("must be >= {min}, got {v}")));
    }
    Ok(v)
}

fn real(key: &str, value: &str) -> Result<f64> {
    let v: f64 = parse(key, value, "a number")?;
    if !v.is_finite() {
        return Err(Error::config(key, format!("must be finite, got {v}")));
    }
    Ok(v)
}

fn fraction(key: &str, value: &str) -> Result<f64> {
    let v = real(key, value)?;
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::config(key, format!("must be in (0, 1), got {v}")));
    }
    Ok(v)
}

impl RunConfig {
    /// Set one key from its textual value, checking its range.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "p" => self.p = at_least(key, value, 2)?,
            "q" => self.q = at_least(key, value, 1)?,
            "d" => self.d = at_least(key, value, 1)?,
            "k" => self.k = at_least(key, value, 1)?,
            "delta_pdf" => {
                let v = real(key, value)?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::config(key, format!("must be in [0, 1], got {v}")));
                }
                self.delta_pdf = v;
            }
            "delta_adt" => self.delta_adt = real(key, value)?,
            "beta" => {
                let v = real(key, value)?;
                if v < 0.0 {
                    return Err(Error::config(key, format!("must be >= 0, got {v}")));
                }
                self.beta = v;
            }
            "lr" => {
                let v = real(key, value)?;
                if v <= 0.0 {
                    return Err(Error::config(key, format!("must be > 0, got {v}")));
                }
                self.lr = v;
            }
            "batch_size" => self.batch_size = at_least(key, value, 1)?,
            "epochs" => self.epochs = at_least(key, value, 0)?,
            "seed" => self.seed = parse(key, value, "a non-negative integer")?,
            "precision" => self.precision = value.parse()?,
            "train_frac" => self.train_frac = fraction(key, value)?,
            "val_frac" => self.val_frac = fraction(key, value)?,
            "test_frac" => self.test_frac = fraction(key, value)?,
            "data" => self.data = Some(PathBuf::from(value)),
            "distances" => self.distances = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            "sigma" => {
                let v = real(key, value)?;
                if v <= 0.0 {
                    return Err(Error::config(key, format!("must be > 0, got {v}")));
                }
                self.sigma = Some(v);
            }
            "dilations" => {
                let list = value
                    .split(',')
                    .map(|s| at_least(key, s.trim(), 1))
                    .collect::<Result<Vec<_>>>()?;
                self.dilations = Some(list);
            }
            "target_channel" => self.target_channel = at_least(key, value, 0)?,
            "grad_clip" => {
                let v = real(key, value)?;
                if v < 0.0 {
                    return Err(Error::config(key, format!("must be >= 0 (0 disables), got {v}")));
                }
                self.grad_clip = v;
            }
            "strict" => self.strict = parse(key, value, "true or false")?,
            _ => {
                return Err(Error::config(
                    key,
                    format!("unknown key; valid keys are {}", KEYS.join(", ")),
                ))
            }
        }
        Ok(())
    }

    /// Checks that involve more than one key.
    pub fn validate(&self) -> Result<()> {
        let sum = self.train_frac + self.val_frac + self.test_frac;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(
                "train_frac",
                format!("train_frac + val_frac + test_frac must be 1, got {sum}"),
            ));
        }
        Ok(())
    }

    pub fn layer_config(&self) -> Result<LayerConfig> {
        match &self.dilations {
            Some(d) => LayerConfig::new(self.p, self.k, d.clone()),
            None => plan_dilations(self.p, self.k),
        }
    }

    /// Render as a config file that parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        line("p", self.p.to_string());
        line("q", self.q.to_string());
        line("d", self.d.to_string());
        line("k", self.k.to_string());
        line("delta_pdf", self.delta_pdf.to_string());
        line("delta_adt", self.delta_adt.to_string());
        line("beta", self.beta.to_string());
        line("lr", self.lr.to_string());
        line("batch_size", self.batch_size.to_string());
        line("epochs", self.epochs.to_string());
        line("seed", self.seed.to_string());
        line("precision", self.precision.to_string());
        line("train_frac", self.train_frac.to_string());
        line("val_frac", self.val_frac.to_string());
        line("test_frac", self.test_frac.to_string());
        for (k, v) in [("data", &self.data), ("distances", &self.distances), ("out", &self.out)] {
            if let Some(p) = v {
                line(k, p.display().to_string());
            }
        }
        if let Some(v) = self.sigma {
            line("sigma", v.to_string());
        }
        if let Some(d) = &self.dilations {
            line("dilations", d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
        }
        line("target_channel", self.target_channel.to_string());
        line("grad_clip", self.grad_clip.to_string());
        line("strict", self.strict.to_string());
        s
    }
}

/// `key = value` pairs of a config file; `#` starts a comment line.
pub fn parse_config_text(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            msg,
        };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if out.iter().any(|(seen, _)| seen == k) {
            return Err(err(format!("key `{k}` set twice")));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Defaults, then the file (if any), then the overrides.
pub fn parse_config(file: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = file {
        let text = read_text(path)?;
        for (k, v) in parse_config_text(&text, path)? {
            cfg.set(&k, &v)?;
        }
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}
