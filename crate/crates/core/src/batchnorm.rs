//! Batch normalisation over every axis except the last (channel) axis.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

/// Running statistics of one batch-norm site. The learnable scale and shift
/// live with the other parameters; this holds only the non-trainable state.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormStats<T> {
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub updates: u64,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Scalar> BatchNormStats<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            updates: 0,
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    fn update(&mut self, mean: &[T], var: &[T]) {
        let m = T::of(self.momentum);
        let one_m = T::of(1.0 - self.momentum);
        for (r, &b) in self.running_mean.iter_mut().zip(mean) {
            *r = m * *r + one_m * b;
        }
        for (r, &b) in self.running_var.iter_mut().zip(var) {
            *r = m * *r + one_m * b;
        }
        self.updates += 1;
    }
}

impl<T: Scalar> Tape<T> {
    /// `gamma * (x - mean) / sqrt(var + eps) + beta` per channel (last axis).
    ///
    /// In training mode the batch statistics (biased variance) are used and
    /// folded into `stats`; otherwise the running statistics are used.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &mut BatchNormStats<T>,
        training: bool,
    ) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let c = *shape.last().unwrap();
        if self.shape(gamma) != [c] || self.shape(beta) != [c] || stats.channels() != c {
            return Err(Error::shape("batch_norm", &shape, self.shape(gamma)));
        }
        let xs = self.value(x).data().to_vec();
        let rows = xs.len() / c;
        let eps = T::of(stats.eps);

        let (mean, var) = if training {
            if rows < 2 {
                return Err(Error::invalid(
                    "batch_norm",
                    format!("training mode needs at least 2 rows per channel, got {rows}"),
                ));
            }
            let n = T::of(rows as f64);
            let mut mean = vec![T::zero(); c];
            for r in 0..rows {
                for (m, &v) in mean.iter_mut().zip(&xs[r * c..(r + 1) * c]) {
                    *m = *m + v;
                }
            }
            mean.iter_mut().for_each(|m| *m = *m / n);
            let mut var = vec![T::zero(); c];
            for r in 0..rows {
                for ch in 0..c {
                    let dv = xs[r * c + ch] - mean[ch];
                    var[ch] = var[ch] + dv * dv;
                }
            }
            var.iter_mut().for_each(|v| *v = *v / n);
            stats.update(&mean, &var);
            (mean, var)
        } else {
            if stats.updates == 0 {
                return Err(Error::UninitializedStatistics);
            }
            (stats.running_mean.clone(), stats.running_var.clone())
        };

        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let g = self.value(gamma).data().to_vec();
        let b = self.value(beta).data().to_vec();
        let mut xhat = vec![T::zero(); xs.len()];
        let mut out = vec![T::zero(); xs.len()];
        for r in 0..rows {
            for ch in 0..c {
                let i = r * c + ch;
                xhat[i] = (xs[i] - mean[ch]) * inv_std[ch];
                out[i] = g[ch] * xhat[i] + b[ch];
            }
        }
        let value = Tensor::new(&shape, out)?;
        self.custom(
            "batch_norm",
            &[x, gamma, beta],
            value,
            Box::new(move |grad, needs| {
                let gd = grad.data();
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for r in 0..rows {
                    for ch in 0..c {
                        let i = r * c + ch;
                        dgamma[ch] = dgamma[ch] + gd[i] * xhat[i];
                        dbeta[ch] = dbeta[ch] + gd[i];
                    }
                }
                let dx = if needs[0] {
                    let mut dx = vec![T::zero(); gd.len()];
                    if training {
                        let n = T::of(rows as f64);
                        for r in 0..rows {
                            for ch in 0..c {
                                let i = r * c + ch;
                                let centred = n * gd[i] - dbeta[ch] - xhat[i] * dgamma[ch];
                                dx[i] = g[ch] * inv_std[ch] * centred / n;
                            }
                        }
                    } else {
                        for r in 0..rows {
                            for ch in 0..c {
                                let i = r * c + ch;
                                dx[i] = g[ch] * inv_std[ch] * gd[i];
                            }
                        }
                    }
                    Some(Tensor::new(&shape, dx).unwrap())
                } else {
                    None
                };
                vec![
                    dx,
                    Some(Tensor::new(&[c], dgamma).unwrap()),
                    Some(Tensor::new(&[c], dbeta).unwrap()),
                ]
            }),
        )
    }
}
