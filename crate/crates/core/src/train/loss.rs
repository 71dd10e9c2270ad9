use serde::Serialize;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Targets with `|x| <` this are excluded from percentage errors.
pub const MAPE_MASK: f64 = 1e-3;

/// Per-entry weights of the percentage term for `[B, Q, N]` targets:
/// `1 / (|x| · count_i · Q)` for the kept entries of horizon `i`, else 0.
/// A horizon whose targets are all masked contributes nothing.
fn percentage_weights(truth: &[f64], q: usize, n: usize) -> Vec<f64> {
    let b = truth.len() / (q * n);
    let mut kept = vec![0usize; q];
    for w in 0..b {
        for i in 0..q {
            let row = &truth[(w * q + i) * n..(w * q + i + 1) * n];
            kept[i] += row.iter().filter(|x| x.abs() >= MAPE_MASK).count();
        }
    }
    let mut weights = vec![0.0; truth.len()];
    for w in 0..b {
        for i in 0..q {
            for j in 0..n {
                let at = (w * q + i) * n + j;
                let x = truth[at];
                if x.abs() >= MAPE_MASK {
                    weights[at] = 1.0 / (x.abs() * kept[i] as f64 * q as f64);
                }
            }
        }
    }
    weights
}

fn check_shape(pred: &[usize], truth: &[usize]) -> Result<(usize, usize)> {
    if pred != truth || pred.len() != 3 {
        return Err(Error::shape("combined_loss", pred, truth));
    }
    Ok((pred[1], pred[2]))
}

/// `MAE + β·MAPE` on de-normalized `[B, Q, N]` predictions, where MAPE is
/// averaged per horizon over unmasked targets, then over horizons, and
/// reported in percent.
pub fn combined_loss<T: Scalar>(tape: &mut Tape<T>, pred: Var, truth: &Tensor<T>, beta: f64) -> Result<Var> {
    let (q, n) = check_shape(tape.shape(pred), truth.shape())?;
    let target = tape.constant(truth.clone());
    let diff = tape.sub(pred, target)?;
    let err = tape.abs(diff)?;
    let mae = tape.mean(err)?;
    if beta == 0.0 {
        return Ok(mae);
    }
    let weights = percentage_weights(&truth.to_f64_vec(), q, n);
    let w = tape.constant(Tensor::from_f64(truth.shape(), &weights)?);
    let weighted = tape.mul(err, w)?;
    let pct = tape.sum(weighted)?;
    let pct = tape.scale(pct, 100.0 * beta)?;
    tape.add(mae, pct)
}

/// Value of [`combined_loss`] on plain arrays shaped `[B, Q, N]`.
pub fn combined_loss_value(pred: &[f64], truth: &[f64], q: usize, n: usize, beta: f64) -> f64 {
    let mae = pred.iter().zip(truth).map(|(p, x)| (p - x).abs()).sum::<f64>() / pred.len() as f64;
    if beta == 0.0 {
        return mae;
    }
    let weights = percentage_weights(truth, q, n);
    let pct: f64 = pred
        .iter()
        .zip(truth)
        .zip(&weights)
        .map(|((p, x), w)| (p - x).abs() * w)
        .sum();
    mae + 100.0 * beta * pct
}

/// MAE, RMSE and MAPE (percent, masked).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    pub mape: f64,
}

/// Targets large enough to enter the MAPE terms.
pub fn mape_count(truth: &[f64]) -> usize {
    truth.iter().filter(|x| x.abs() >= MAPE_MASK).count()
}

pub fn metrics(pred: &[f64], truth: &[f64]) -> Metrics {
    let n = pred.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut pct = 0.0;
    let mut kept = 0usize;
    for (p, x) in pred.iter().zip(truth) {
        let e = p - x;
        abs += e.abs();
        sq += e * e;
        if x.abs() >= MAPE_MASK {
            pct += (e / x).abs();
            kept += 1;
        }
    }
    Metrics {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
        mape: if kept == 0 { 0.0 } else { 100.0 * pct / kept as f64 },
    }
}

/// Metrics of each horizon step of `[B, Q, N]` arrays.
pub fn horizon_metrics(pred: &[f64], truth: &[f64], q: usize, n: usize) -> Vec<Metrics> {
    let b = pred.len() / (q * n);
    (0..q)
        .map(|i| {
            let pick = |xs: &[f64]| -> Vec<f64> {
                (0..b).flat_map(|w| xs[(w * q + i) * n..(w * q + i + 1) * n].to_vec()).collect()
            };
            metrics(&pick(pred), &pick(truth))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let mut tape = Tape::<f64>::new();
        let pred = tape.param(Tensor::new(&[1, 1, 2], vec![11.0, 18.0]).unwrap());
        let truth = Tensor::new(&[1, 1, 2], vec![10.0, 20.0]).unwrap();
        let loss = combined_loss(&mut tape, pred, &truth, 1.0).unwrap();
        assert_eq!(tape.value(loss).item(), 11.5);
        assert_eq!(combined_loss_value(&[11.0, 18.0], &[10.0, 20.0], 1, 2, 1.0), 11.5);
    }

    #[test]
    fn zero_targets_are_masked() {
        let v = combined_loss_value(&[1.0, 12.0], &[0.0, 10.0], 1, 2, 1.0);
        assert!((v - (1.5 + 20.0)).abs() < 1e-12);
        let all_zero = combined_loss_value(&[1.0, 2.0], &[0.0, 0.0], 1, 2, 1.0);
        assert_eq!(all_zero, 1.5);
        assert_eq!(metrics(&[1.0], &[0.0]).mape, 0.0);
    }

    #[test]
    fn perfect_prediction_is_zero() {
        let xs = [3.0, -4.0, 0.0, 7.5, 2.0, 1.0];
        assert_eq!(combined_loss_value(&xs, &xs, 3, 1, 1.0), 0.0);
        assert_eq!(metrics(&xs, &xs), Metrics::default());
    }

    #[test]
    fn horizon_average_is_per_step() {
        // horizon 0 has one kept target, horizon 1 has two
        let truth = [10.0, 0.0, 10.0, 20.0];
        let pred = [11.0, 0.0, 11.0, 22.0];
        let v = combined_loss_value(&pred, &truth, 2, 2, 1.0);
        let mae = 4.0 / 4.0;
        let mape = 100.0 * (0.1 + (0.1 + 0.1) / 2.0) / 2.0;
        assert!((v - mae - mape).abs() < 1e-12);
    }

    #[test]
    fn tape_and_value_agree() {
        let truth: Vec<f64> = (0..24).map(|i| ((i * 37) % 11) as f64 - 3.0).collect();
        let pred: Vec<f64> = (0..24).map(|i| ((i * 53) % 13) as f64 * 0.7 - 2.0).collect();
        let mut tape = Tape::<f64>::new();
        let p = tape.param(Tensor::new(&[2, 3, 4], pred.clone()).unwrap());
        let loss = combined_loss(&mut tape, p, &Tensor::new(&[2, 3, 4], truth.clone()).unwrap(), 0.3).unwrap();
        let v = combined_loss_value(&pred, &truth, 3, 4, 0.3);
        assert!((tape.value(loss).item() - v).abs() < 1e-12);
    }

    #[test]
    fn metrics_by_scalar_loop() {
        let pred = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let truth = [1.5, 2.0, 2.0, 5.0, 0.0005, 6.6];
        let m = metrics(&pred, &truth);
        let mut a = 0.0;
        let mut s = 0.0;
        for i in 0..6 {
            a += (pred[i] - truth[i]).abs();
            s += (pred[i] - truth[i]).powi(2);
        }
        assert!((m.mae - a / 6.0).abs() < 1e-12);
        assert!((m.rmse - (s / 6.0).sqrt()).abs() < 1e-12);
        let pct = (0.5 / 1.5 + 0.0 + 1.0 / 2.0 + 1.0 / 5.0 + 0.6 / 6.6) / 5.0 * 100.0;
        assert!((m.mape - pct).abs() < 1e-9);
        let h = horizon_metrics(&pred, &truth, 3, 1);
        assert_eq!(h.len(), 3);
        assert!((h[0].mae - (0.5 + 1.0) / 2.0).abs() < 1e-12);
    }
}
