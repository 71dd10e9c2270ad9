//! Explicit-loop reference implementations of the layers and metrics, and
//! randomized cases comparing them with the tensor code.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::batchnorm::BatchNormStats;
use crate::graph::{build_predefined, DistanceGraph, Edge};
use crate::model::{multi_range_attention, stjgc_adaptive, stjgc_predefined, BranchWeights, Phi};
use crate::tensor::Tensor;
use crate::train::{metrics, Evaluation, Metrics};

type M = Vec<Vec<f64>>;

fn rand_t(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::uniform(shape, -1.0, 1.0, rng)
}

fn rows(t: &Tensor<f64>) -> M {
    let (r, c) = (t.shape()[0], t.shape()[1]);
    (0..r).map(|i| (0..c).map(|j| t.at(&[i, j])).collect()).collect()
}

/// Batch norm (training statistics, biased variance) then ReLU per column.
pub fn phi_oracle(x: &M, gamma: &[f64], beta: &[f64]) -> M {
    let n = x.len() as f64;
    let cols = x[0].len();
    let mut out = x.clone();
    for c in 0..cols {
        let mean = x.iter().map(|r| r[c]).sum::<f64>() / n;
        let var = x.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n;
        for (o, r) in out.iter_mut().zip(x) {
            let v = gamma[c] * (r[c] - mean) / (var + 1e-5).sqrt() + beta[c];
            o[c] = v.max(0.0);
        }
    }
    out
}

/// `Σ_j φ(Σ_u A[i][u] Σ_c X[u][c] W1[c][o] + Σ_u A'[i][u] ... + b)`
fn conv_oracle(
    xs: &[M],
    adj: &[(M, M)],
    w1: &[M],
    w2: &[M],
    b: &[f64],
    gamma: &[Vec<f64>],
    beta: &[Vec<f64>],
) -> M {
    let n = xs[0].len();
    let d_in = xs[0][0].len();
    let d = b.len();
    let mut total = vec![vec![0.0; d]; n];
    for j in 0..xs.len() {
        let mut pre = vec![vec![0.0; d]; n];
        for i in 0..n {
            for o in 0..d {
                let mut s = b[o];
                for u in 0..n {
                    for c in 0..d_in {
                        s += adj[j].0[i][u] * xs[j][u][c] * w1[j][c][o];
                        s += adj[j].1[i][u] * xs[j][u][c] * w2[j][c][o];
                    }
                }
                pre[i][o] = s;
            }
        }
        let h = phi_oracle(&pre, &gamma[j], &beta[j]);
        for i in 0..n {
            for o in 0..d {
                total[i][o] += h[i][o];
            }
        }
    }
    total
}

struct Fixture {
    xs: Vec<Tensor<f64>>,
    w1: Vec<Tensor<f64>>,
    w2: Vec<Tensor<f64>>,
    b: Tensor<f64>,
    gamma: Vec<Tensor<f64>>,
    beta: Vec<Tensor<f64>>,
}

fn fixture(n: usize, d: usize, k: usize, rng: &mut ChaCha8Rng) -> Fixture {
    Fixture {
        xs: (0..k).map(|_| rand_t(&[n, d], rng)).collect(),
        w1: (0..k).map(|_| rand_t(&[d, d], rng)).collect(),
        w2: (0..k).map(|_| rand_t(&[d, d], rng)).collect(),
        b: rand_t(&[d], rng),
        gamma: (0..k).map(|_| Tensor::uniform(&[d], 0.5, 1.5, rng)).collect(),
        beta: (0..k).map(|_| rand_t(&[d], rng)).collect(),
    }
}

fn bind(
    tape: &mut Tape<f64>,
    f: &Fixture,
) -> (Vec<Var>, BranchWeights, Vec<(Var, Var)>) {
    let window = f.xs.iter().map(|x| tape.param(x.clone())).collect();
    let w = BranchWeights {
        first: f.w1.iter().map(|x| tape.param(x.clone())).collect(),
        second: f.w2.iter().map(|x| tape.param(x.clone())).collect(),
        bias: tape.param(f.b.clone()),
    };
    let bn = f
        .gamma
        .iter()
        .zip(&f.beta)
        .map(|(g, b)| (tape.param(g.clone()), tape.param(b.clone())))
        .collect();
    (window, w, bn)
}

fn phis<'a>(bn: &[(Var, Var)], stats: &'a mut [BatchNormStats<f64>]) -> Vec<Phi<'a, f64>> {
    bn.iter()
        .zip(stats.iter_mut())
        .map(|(&(gamma, beta), stats)| Phi {
            gamma,
            beta,
            stats,
            training: true,
        })
        .collect()
}

fn random_graph(n: usize, rng: &mut ChaCha8Rng) -> DistanceGraph {
    let mut edges = Vec::new();
    for from in 0..n {
        for to in 0..n {
            if from != to && rng.gen_bool(0.6) {
                edges.push(Edge { from, to, distance: rng.gen_range(0.1..3.0) });
            }
        }
    }
    edges.push(Edge { from: 0, to: n - 1, distance: 0.05 });
    edges.push(Edge { from: n - 1, to: 0, distance: 2.5 });
    edges.sort_by_key(|e| (e.from, e.to));
    edges.dedup_by_key(|e| (e.from, e.to));
    DistanceGraph::new(n, edges).unwrap()
}

pub fn check_predefined_case(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=5);
    let d = rng.gen_range(1..=4);
    let k = rng.gen_range(1..=3);
    let spacing = rng.gen_range(1..=2);
    let g = random_graph(n, &mut rng);
    let stjg = build_predefined::<f64>(&g, spacing * (k - 1) + 1, 0.05).unwrap();
    let f = fixture(n, d, k, &mut rng);
    let mut tape = Tape::new();
    let (window, w, bn) = bind(&mut tape, &f);
    let mut stats: Vec<_> = (0..k).map(|_| BatchNormStats::new(d)).collect();
    let mut ph = phis(&bn, &mut stats);
    let out = stjgc_predefined(&mut tape, &window, &stjg, spacing, &w, &mut ph).unwrap();
    let adj: Vec<(M, M)> = (0..k)
        .map(|j| (rows(&stjg.forward[j * spacing]), rows(&stjg.backward[j * spacing])))
        .collect();
    let want = conv_oracle(
        &f.xs.iter().map(rows).collect::<Vec<_>>(),
        &adj,
        &f.w1.iter().map(rows).collect::<Vec<_>>(),
        &f.w2.iter().map(rows).collect::<Vec<_>>(),
        f.b.data(),
        &f.gamma.iter().map(|t| t.data().to_vec()).collect::<Vec<_>>(),
        &f.beta.iter().map(|t| t.data().to_vec()).collect::<Vec<_>>(),
    );
    max_diff(&rows(tape.value(out)), &want)
}

fn max_diff(a: &M, b: &M) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Row-wise masked softmax of `Ua B Ubᵀ` by explicit loops.
fn adaptive_oracle(ua: &M, ub: &M, b: &M, thr: f64) -> M {
    let n = ua.len();
    let d = b.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut scores = vec![0.0; n];
        for (j, s) in scores.iter_mut().enumerate() {
            for p in 0..d {
                for q in 0..d {
                    *s += ua[i][p] * b[p][q] * ub[j][q];
                }
            }
        }
        let kept: Vec<usize> = (0..n).filter(|&j| scores[j] >= thr).collect();
        if kept.is_empty() {
            continue;
        }
        let mx = kept.iter().map(|&j| scores[j]).fold(f64::MIN, f64::max);
        let z: f64 = kept.iter().map(|&j| (scores[j] - mx).exp()).sum();
        for &j in &kept {
            out[i][j] = (scores[j] - mx).exp() / z;
        }
    }
    out
}

pub fn check_adaptive_case(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=5);
    let d = rng.gen_range(1..=4);
    let k = rng.gen_range(1..=3);
    let thr = rng.gen_range(-0.5..0.3);
    let f = fixture(n, d, k, &mut rng);
    let us: Vec<Tensor<f64>> = (0..k).map(|_| rand_t(&[n, d], &mut rng)).collect();
    let b = rand_t(&[d, d], &mut rng);
    let mut tape = Tape::new();
    let (window, w, bn) = bind(&mut tape, &f);
    let u_vars: Vec<Var> = us.iter().map(|u| tape.param(u.clone())).collect();
    let b_var = tape.param(b.clone());
    let mut stats: Vec<_> = (0..k).map(|_| BatchNormStats::new(d)).collect();
    let mut ph = phis(&bn, &mut stats);
    let out =
        stjgc_adaptive(&mut tape, &window, &u_vars, b_var, thr, &w, &mut ph).unwrap();
    let bm = rows(&b);
    let now = rows(&us[0]);
    let adj: Vec<(M, M)> = us
        .iter()
        .map(|u| {
            let past = rows(u);
            (
                adaptive_oracle(&past, &now, &bm, thr),
                adaptive_oracle(&now, &past, &bm, thr),
            )
        })
        .collect();
    let want = conv_oracle(
        &f.xs.iter().map(rows).collect::<Vec<_>>(),
        &adj,
        &f.w1.iter().map(rows).collect::<Vec<_>>(),
        &f.w2.iter().map(rows).collect::<Vec<_>>(),
        f.b.data(),
        &f.gamma.iter().map(|t| t.data().to_vec()).collect::<Vec<_>>(),
        &f.beta.iter().map(|t| t.data().to_vec()).collect::<Vec<_>>(),
    );
    max_diff(&rows(tape.value(out)), &want)
}

/// Returns (max deviation from the loop oracle, max |Σα − 1|).
pub fn check_attention_case(seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=5);
    let d = rng.gen_range(1..=4);
    let m = rng.gen_range(1..=4);
    let zs: Vec<Tensor<f64>> = (0..m).map(|_| rand_t(&[n, d], &mut rng)).collect();
    let wa = rand_t(&[d, d], &mut rng);
    let ba = rand_t(&[d], &mut rng);
    let v = rand_t(&[d], &mut rng);
    let mut tape = Tape::new();
    let z_vars: Vec<Var> = zs.iter().map(|z| tape.param(z.clone())).collect();
    let (wv, bv, vv) = (
        tape.param(wa.clone()),
        tape.param(ba.clone()),
        tape.param(v.clone()),
    );
    let (y, alpha) = multi_range_attention(&mut tape, &z_vars, wv, bv, vv).unwrap();
    let mut dev: f64 = 0.0;
    let mut sum_dev: f64 = 0.0;
    for i in 0..n {
        let s: Vec<f64> = zs
            .iter()
            .map(|z| {
                (0..d)
                    .map(|o| {
                        let mut h = ba.data()[o];
                        for c in 0..d {
                            h += z.at(&[i, c]) * wa.at(&[c, o]);
                        }
                        h.tanh() * v.data()[o]
                    })
                    .sum()
            })
            .collect();
        let mx = s.iter().copied().fold(f64::MIN, f64::max);
        let tot: f64 = s.iter().map(|x| (x - mx).exp()).sum();
        let a: Vec<f64> = s.iter().map(|x| (x - mx).exp() / tot).collect();
        let got_sum: f64 = (0..m).map(|mm| tape.value(alpha).at(&[i, mm])).sum();
        sum_dev = sum_dev.max((got_sum - 1.0).abs());
        for o in 0..d {
            let want: f64 = (0..m).map(|mm| a[mm] * zs[mm].at(&[i, o])).sum();
            dev = dev.max((tape.value(y).at(&[i, o]) - want).abs());
        }
    }
    (dev, sum_dev)
}

/// Batched broadcasting matmul against a triple loop; returns the max
/// absolute deviation.
pub fn check_matmul_case(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, k, n) = (rng.gen_range(1..=5), rng.gen_range(1..=5), rng.gen_range(1..=5));
    let batch = rng.gen_range(1..=3);
    // 0: both batched, 1: left only, 2: right only
    let mode = rng.gen_range(0..3);
    let a_shape = if mode == 2 { vec![m, k] } else { vec![batch, m, k] };
    let b_shape = if mode == 1 { vec![k, n] } else { vec![batch, k, n] };
    let a = rand_t(&a_shape, &mut rng);
    let b = rand_t(&b_shape, &mut rng);
    let got = a.matmul(&b).unwrap();
    let mut dev: f64 = 0.0;
    for z in 0..batch {
        let ao = if mode == 2 { 0 } else { z * m * k };
        let bo = if mode == 1 { 0 } else { z * k * n };
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a.data()[ao + i * k + p] * b.data()[bo + p * n + j];
                }
                dev = dev.max((got.data()[z * m * n + i * n + j] - s).abs());
            }
        }
    }
    dev
}

fn metrics_oracle(pairs: &[(f64, f64)]) -> Metrics {
    let n = pairs.len() as f64;
    let mae = pairs.iter().map(|(p, x)| (p - x).abs()).sum::<f64>() / n;
    let rmse = (pairs.iter().map(|(p, x)| (p - x) * (p - x)).sum::<f64>() / n).sqrt();
    let kept: Vec<f64> = pairs
        .iter()
        .filter(|(_, x)| x.abs() >= crate::train::MAPE_MASK)
        .map(|(p, x)| ((p - x) / x).abs())
        .collect();
    let mape = if kept.is_empty() { 0.0 } else { 100.0 * kept.iter().sum::<f64>() / kept.len() as f64 };
    Metrics { mae, rmse, mape }
}

fn metric_diff(a: &Metrics, b: &Metrics) -> f64 {
    (a.mae - b.mae).abs().max((a.rmse - b.rmse).abs()).max((a.mape - b.mape).abs())
}

/// Overall and per-horizon evaluation of `[B, Q, N]` arrays against loops
/// over windows, horizons and nodes; returns the max absolute deviation.
pub fn check_evaluate_case(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b, q, n) = (rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=5));
    let truth: Vec<f64> = (0..b * q * n)
        .map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(-50.0..200.0) })
        .collect();
    let pred: Vec<f64> = truth.iter().map(|x| x + rng.gen_range(-20.0..20.0)).collect();
    let ev = Evaluation::from_arrays(pred.clone(), truth.clone(), q, n);
    let at = |w: usize, h: usize, v: usize| {
        let i = (w * q + h) * n + v;
        (pred[i], truth[i])
    };
    let mut all = Vec::new();
    for w in 0..b {
        for h in 0..q {
            for v in 0..n {
                all.push(at(w, h, v));
            }
        }
    }
    let mut dev = metric_diff(&ev.overall, &metrics_oracle(&all));
    for h in 0..q {
        let mut pairs = Vec::new();
        for w in 0..b {
            for v in 0..n {
                pairs.push(at(w, h, v));
            }
        }
        dev = dev.max(metric_diff(&ev.horizons[h], &metrics_oracle(&pairs)));
    }
    dev.max(metric_diff(&metrics(&pred, &truth), &ev.overall))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_loops() {
        for seed in 0..50 {
            assert!(check_matmul_case(seed) < 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn evaluate_matches_loops() {
        for seed in 0..50 {
            assert!(check_evaluate_case(seed) < 1e-12, "seed {seed}");
        }
    }
}
