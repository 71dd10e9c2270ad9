use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard added to a zero standard deviation.
pub const STD_GUARD: f64 = 1e-8;

/// Per-channel mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ZScore {
    /// Fit on `rows × channels` values (row-major), typically the training
    /// steps only.
    pub fn fit(values: &[f64], channels: usize) -> Result<Self> {
        if channels == 0 || values.is_empty() || values.len() % channels != 0 {
            return Err(Error::Data("cannot fit normalization on an empty training split".into()));
        }
        let rows = (values.len() / channels) as f64;
        let mut mean = vec![0.0; channels];
        for row in values.chunks(channels) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows);
        let mut var = vec![0.0; channels];
        for row in values.chunks(channels) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .map(|s| {
                let sd = (s / rows).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    sd + STD_GUARD
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        let c = self.channels();
        values
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.mean[i % c]) / self.std[i % c])
            .collect()
    }

    pub fn inverse(&self, values: &[f64]) -> Vec<f64> {
        let c = self.channels();
        values
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.std[i % c] + self.mean[i % c])
            .collect()
    }
}
