use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::loss::{combined_loss, combined_loss_value, horizon_metrics, metrics, Metrics};
use super::windows::{split_windows, SplitSpec, Splits};
use super::zscore::ZScore;
use crate::autodiff::Tape;
use crate::batchnorm::BatchNormStats;
use crate::data::calendar::Calendar;
use crate::data::dataset::TrafficDataset;
use crate::error::{Error, Result};
use crate::model::{Batch, Stjgcn};
use crate::optim::{clip_global_norm, AdamState};
use crate::tensor::{Scalar, Tensor};

/// A dataset cut into windows, with inputs normalized by statistics of
/// the training steps.
#[derive(Clone, Debug)]
pub struct Prepared<T> {
    inputs: Vec<T>,
    target: Vec<f64>,
    nodes: usize,
    channels: usize,
    p: usize,
    q: usize,
    target_channel: usize,
    zscore: ZScore,
    calendar: Calendar,
    splits: Splits,
}

impl<T: Scalar> Prepared<T> {
    /// Split, fit the normalization on the training steps, and normalize.
    pub fn new(ds: &TrafficDataset, p: usize, q: usize, spec: &SplitSpec, target_channel: usize) -> Result<Self> {
        let splits = split_windows(ds.steps(), p, q, spec)?;
        let (train_end, _) = spec.boundaries(ds.steps());
        let width = ds.nodes() * ds.channels();
        let zscore = ZScore::fit(&ds.values()[..train_end * width], ds.channels())?;
        Self::assemble(ds, p, q, splits, target_channel, zscore)
    }

    /// As [`Self::new`] but with normalization statistics from elsewhere,
    /// e.g. a checkpoint.
    pub fn with_zscore(
        ds: &TrafficDataset,
        p: usize,
        q: usize,
        spec: &SplitSpec,
        target_channel: usize,
        zscore: ZScore,
    ) -> Result<Self> {
        if zscore.channels() != ds.channels() {
            return Err(Error::Data(format!(
                "normalization has {} channels, dataset has {}",
                zscore.channels(),
                ds.channels()
            )));
        }
        let splits = split_windows(ds.steps(), p, q, spec)?;
        Self::assemble(ds, p, q, splits, target_channel, zscore)
    }

    fn assemble(
        ds: &TrafficDataset,
        p: usize,
        q: usize,
        splits: Splits,
        target_channel: usize,
        zscore: ZScore,
    ) -> Result<Self> {
        if target_channel >= ds.channels() {
            return Err(Error::config(
                "target_channel",
                format!("{target_channel} but the dataset has {} channels", ds.channels()),
            ));
        }
        let inputs = zscore.apply(ds.values()).into_iter().map(T::of).collect();
        Ok(Self {
            inputs,
            target: ds.channel(target_channel),
            nodes: ds.nodes(),
            channels: ds.channels(),
            p,
            q,
            target_channel,
            zscore,
            calendar: ds.calendar(),
            splits,
        })
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn zscore(&self) -> &ZScore {
        &self.zscore
    }

    pub fn calendar(&self) -> &Calendar {
        &self.calendar
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn input_len(&self) -> usize {
        self.p
    }

    pub fn horizon(&self) -> usize {
        self.q
    }

    pub fn target_channel(&self) -> usize {
        self.target_channel
    }

    /// Model inputs of the windows starting at `starts`.
    pub fn batch(&self, starts: &[usize]) -> Result<Batch<T>> {
        let width = self.nodes * self.channels;
        let mut data = Vec::with_capacity(starts.len() * self.p * width);
        let mut times = Vec::with_capacity(starts.len() * self.p);
        for &s in starts {
            data.extend_from_slice(&self.inputs[s * width..(s + self.p) * width]);
            times.extend(s..s + self.p);
        }
        Ok(Batch {
            inputs: Tensor::new(&[starts.len(), self.p, self.nodes, self.channels], data)?,
            times,
        })
    }

    /// Raw targets `[B, Q, N]` of the windows starting at `starts`.
    pub fn truth(&self, starts: &[usize]) -> Vec<f64> {
        let n = self.nodes;
        starts
            .iter()
            .flat_map(|&s| self.target[(s + self.p) * n..(s + self.p + self.q) * n].iter().copied())
            .collect()
    }

    /// Map normalized target-channel values back to raw units.
    pub fn denormalize(&self, values: &[f64]) -> Vec<f64> {
        let (m, s) = (self.zscore.mean[self.target_channel], self.zscore.std[self.target_channel]);
        values.iter().map(|v| v * s + m).collect()
    }

    /// Last observed value repeated over the horizon, `[B, Q, N]`.
    pub fn persistence(&self, starts: &[usize]) -> Vec<f64> {
        let n = self.nodes;
        let mut out = Vec::with_capacity(starts.len() * self.q * n);
        for &s in starts {
            let last = &self.target[(s + self.p - 1) * n..(s + self.p) * n];
            for _ in 0..self.q {
                out.extend_from_slice(last);
            }
        }
        out
    }
}

/// Optimisation settings.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta: f64,
    pub seed: u64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            lr: 0.001,
            beta: 1.0,
            seed: 0,
            grad_clip: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_mae: f64,
    pub val_rmse: f64,
    pub val_mape: f64,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,val_mae,val_rmse,val_mape";

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = format!("{HISTORY_HEADER}\n");
    for r in history {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.epoch, r.train_loss, r.val_loss, r.val_mae, r.val_rmse, r.val_mape
        );
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters the model holds afterwards; `None` when no
    /// epoch ran.
    pub best_epoch: Option<usize>,
    pub best_val_loss: f64,
}

struct Snapshot<T: Scalar> {
    params: Vec<Tensor<T>>,
    stats: Vec<BatchNormStats<T>>,
}

impl<T: Scalar> Snapshot<T> {
    fn take(model: &Stjgcn<T>) -> Self {
        Self {
            params: model.params().values(),
            stats: model.batch_norm_stats().to_vec(),
        }
    }

    fn restore(self, model: &mut Stjgcn<T>) {
        model.params_mut().set_values(self.params);
        model.batch_norm_stats_mut().clone_from_slice(&self.stats);
    }
}

fn diverged(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::NonFinite { .. } | Error::NonFiniteGradient { .. } => Error::Diverged { epoch, batch },
        other => other,
    }
}

/// One optimisation step on the windows `starts`; returns the loss.
fn step<T: Scalar>(
    model: &mut Stjgcn<T>,
    data: &Prepared<T>,
    adam: &mut AdamState<T>,
    names: &[String],
    starts: &[usize],
    cfg: &TrainConfig,
) -> Result<f64> {
    let batch = data.batch(starts)?;
    let truth = Tensor::from_f64(&[starts.len(), data.q, data.nodes], &data.truth(starts))?;
    let mut tape = Tape::new();
    let vars = model.params().bind(&mut tape);
    let out = model.forward(&mut tape, &vars, data.calendar(), &batch, true)?;
    let c = data.target_channel;
    let pred = tape.scale(out.prediction, data.zscore.std[c])?;
    let pred = tape.add_scalar(pred, data.zscore.mean[c])?;
    let loss = combined_loss(&mut tape, pred, &truth, cfg.beta)?;
    let value = tape.value(loss).item().f64();
    let mut grads = tape.backward(loss)?;
    let mut g: Vec<Tensor<T>> = vars
        .vars()
        .iter()
        .map(|&v| grads.take(v).unwrap_or_else(|| Tensor::zeros(tape.shape(v))))
        .collect();
    if cfg.grad_clip > 0.0 {
        clip_global_norm(&mut g, cfg.grad_clip);
    }
    let mut values = model.params().values();
    adam.step(&mut values, &g, names)?;
    model.params_mut().set_values(values);
    Ok(value)
}

/// Inference-mode predictions `[B, Q, N]` in raw units.
pub fn predict_windows<T: Scalar>(
    model: &mut Stjgcn<T>,
    data: &Prepared<T>,
    starts: &[usize],
    batch_size: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(starts.len() * data.q * data.nodes);
    for chunk in starts.chunks(batch_size.max(1)) {
        let pred = model.predict(data.calendar(), &data.batch(chunk)?)?;
        out.extend(data.denormalize(&pred.to_f64_vec()));
    }
    Ok(out)
}

/// Mini-batch Adam on the training windows, keeping the parameters of the
/// epoch with the lowest validation loss. `on_epoch` sees each record as it
/// is produced.
pub fn train<T: Scalar>(
    model: &mut Stjgcn<T>,
    data: &Prepared<T>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainReport> {
    if cfg.batch_size == 0 {
        return Err(Error::config("batch_size", "must be positive"));
    }
    let mc = model.config();
    if (mc.nodes, mc.channels, mc.input_len, mc.horizon) != (data.nodes, data.channels, data.p, data.q) {
        return Err(Error::Data(format!(
            "model expects N={} C={} P={} Q={}, data has N={} C={} P={} Q={}",
            mc.nodes, mc.channels, mc.input_len, mc.horizon, data.nodes, data.channels, data.p, data.q
        )));
    }
    let names = model.params().names();
    let mut adam = AdamState::new(model.params().entries().iter().map(|e| &e.value), cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = data.splits.train.clone();
    let val = data.splits.val.clone();
    let val_truth = data.truth(&val);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Snapshot<T>)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut seen = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            // batch norm needs two rows
            if chunk.len() * data.nodes < 2 {
                continue;
            }
            let loss = step(model, data, &mut adam, &names, chunk, cfg).map_err(|e| diverged(e, epoch, b + 1))?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b + 1 });
            }
            total += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let pred = predict_windows(model, data, &val, cfg.batch_size).map_err(|e| diverged(e, epoch, 0))?;
        let val_loss = combined_loss_value(&pred, &val_truth, data.q, data.nodes, cfg.beta);
        let m = metrics(&pred, &val_truth);
        let record = EpochRecord {
            epoch,
            train_loss: total / seen.max(1) as f64,
            val_loss,
            val_mae: m.mae,
            val_rmse: m.rmse,
            val_mape: m.mape,
        };
        on_epoch(&record);
        history.push(record);
        if best.as_ref().map_or(true, |(_, l, _)| val_loss < *l) {
            best = Some((epoch, val_loss, Snapshot::take(model)));
        }
    }
    let (best_epoch, best_val_loss) = match best {
        Some((e, l, snap)) => {
            snap.restore(model);
            (Some(e), l)
        }
        None => (None, f64::NAN),
    };
    Ok(TrainReport {
        history,
        best_epoch,
        best_val_loss,
    })
}

/// Overall and per-horizon test metrics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub overall: Metrics,
    pub horizons: Vec<Metrics>,
    /// Raw-unit predictions `[B, Q, N]`.
    #[serde(skip)]
    pub predictions: Vec<f64>,
    #[serde(skip)]
    pub truth: Vec<f64>,
}

impl Evaluation {
    pub fn from_arrays(pred: Vec<f64>, truth: Vec<f64>, q: usize, n: usize) -> Self {
        Self {
            overall: metrics(&pred, &truth),
            horizons: horizon_metrics(&pred, &truth, q, n),
            predictions: pred,
            truth,
        }
    }
}

pub fn evaluate<T: Scalar>(
    model: &mut Stjgcn<T>,
    data: &Prepared<T>,
    starts: &[usize],
    batch_size: usize,
) -> Result<Evaluation> {
    let pred = predict_windows(model, data, starts, batch_size)?;
    Ok(Evaluation::from_arrays(pred, data.truth(starts), data.q, data.nodes))
}

/// Persistence forecast scored the same way.
pub fn evaluate_persistence<T: Scalar>(data: &Prepared<T>, starts: &[usize]) -> Evaluation {
    Evaluation::from_arrays(data.persistence(starts), data.truth(starts), data.q, data.nodes)
}
