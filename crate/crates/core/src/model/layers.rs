//! Building blocks of the network, usable on a single window (`[N, d]`
//! arrays) or on a batch of rows (`[R, N, d]`).

use crate::autodiff::{Tape, Var};
use crate::batchnorm::BatchNormStats;
use crate::error::{Error, Result};
use crate::graph::{build_adaptive, PredefinedStjg};
use crate::tensor::Scalar;

/// Batch norm followed by ReLU.
pub struct Phi<'a, T: Scalar> {
    pub gamma: Var,
    pub beta: Var,
    pub stats: &'a mut BatchNormStats<T>,
    pub training: bool,
}

impl<T: Scalar> Phi<'_, T> {
    pub fn apply(&mut self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let y = tape.batch_norm(x, self.gamma, self.beta, self.stats, self.training)?;
        tape.relu(y)
    }
}

/// Per-tap weights of one graph branch.
#[derive(Clone, Debug)]
pub struct BranchWeights {
    /// Applied after the forward (or `t-k -> t`) adjacency, one per tap.
    pub first: Vec<Var>,
    /// Applied after the backward (or `t -> t-k`) adjacency, one per tap.
    pub second: Vec<Var>,
    pub bias: Var,
}

/// `Σ_j φ_j(A_j X_j W_{j,1} + A'_j X_j W_{j,2} + b)`.
///
/// `window[j]` is the input `j` taps back, `adjacency[j]` the pair
/// `(A_j, A'_j)`.
pub fn joint_graph_conv<T: Scalar>(
    tape: &mut Tape<T>,
    window: &[Var],
    adjacency: &[(Var, Var)],
    w: &BranchWeights,
    phis: &mut [Phi<'_, T>],
) -> Result<Var> {
    let k = window.len();
    if k == 0
        || adjacency.len() != k
        || w.first.len() != k
        || w.second.len() != k
        || phis.len() != k
    {
        return Err(Error::invalid(
            "joint_graph_conv",
            format!(
                "window has {k} taps but got {} adjacency pairs, {}/{} weights and {} activations",
                adjacency.len(),
                w.first.len(),
                w.second.len(),
                phis.len()
            ),
        ));
    }
    let mut total = None;
    for j in 0..k {
        let xw1 = tape.matmul(window[j], w.first[j])?;
        let a1 = tape.matmul(adjacency[j].0, xw1)?;
        let xw2 = tape.matmul(window[j], w.second[j])?;
        let a2 = tape.matmul(adjacency[j].1, xw2)?;
        let s = tape.add(a1, a2)?;
        let s = tape.add(s, w.bias)?;
        let h = phis[j].apply(tape, s)?;
        total = Some(match total {
            None => h,
            Some(t) => tape.add(t, h)?,
        });
    }
    Ok(total.unwrap())
}

/// Distance-graph branch: tap `j` uses the kernel for time gap `j * spacing`.
pub fn stjgc_predefined<T: Scalar>(
    tape: &mut Tape<T>,
    window: &[Var],
    stjg: &PredefinedStjg<T>,
    spacing: usize,
    w: &BranchWeights,
    phis: &mut [Phi<'_, T>],
) -> Result<Var> {
    let adjacency = predefined_pairs(tape, stjg, spacing, window.len())?;
    joint_graph_conv(tape, window, &adjacency, w, phis)
}

/// Forward/backward normalized kernels for each tap as tape constants.
pub fn predefined_pairs<T: Scalar>(
    tape: &mut Tape<T>,
    stjg: &PredefinedStjg<T>,
    spacing: usize,
    taps: usize,
) -> Result<Vec<(Var, Var)>> {
    let need = spacing * taps.saturating_sub(1) + 1;
    if need > stjg.gaps() {
        return Err(Error::invalid(
            "stjgc_predefined",
            format!(
                "needs time gaps up to {} but only {} were precomputed",
                need - 1,
                stjg.gaps()
            ),
        ));
    }
    Ok((0..taps)
        .map(|j| {
            let g = j * spacing;
            (
                tape.constant(stjg.forward[g].clone()),
                tape.constant(stjg.backward[g].clone()),
            )
        })
        .collect())
}

/// Embedding-graph branch. `embeddings[j]` is the embedding at the time of
/// tap `j`; `embeddings[0]` is the current step.
pub fn stjgc_adaptive<T: Scalar>(
    tape: &mut Tape<T>,
    window: &[Var],
    embeddings: &[Var],
    interaction: Var,
    threshold: f64,
    w: &BranchWeights,
    phis: &mut [Phi<'_, T>],
) -> Result<Var> {
    if embeddings.len() != window.len() {
        return Err(Error::invalid(
            "stjgc_adaptive",
            format!("{} embeddings for {} taps", embeddings.len(), window.len()),
        ));
    }
    let now = embeddings[0];
    let mut adjacency = Vec::with_capacity(window.len());
    for &past in embeddings {
        let into_now = build_adaptive(tape, past, now, interaction, threshold)?;
        let from_now = build_adaptive(tape, now, past, interaction, threshold)?;
        adjacency.push((into_now, from_now));
    }
    joint_graph_conv(tape, window, &adjacency, w, phis)
}

/// `G = σ([Zp ‖ Za] Wg + bg)`, output `G ⊙ Zp + (1 − G) ⊙ Za`.
pub fn gate_fuse<T: Scalar>(
    tape: &mut Tape<T>,
    z_pdf: Var,
    z_adt: Var,
    w_gate: Var,
    b_gate: Var,
) -> Result<Var> {
    if tape.shape(z_pdf) != tape.shape(z_adt) {
        let (a, b) = (tape.shape(z_pdf).to_vec(), tape.shape(z_adt).to_vec());
        return Err(Error::shape("gate_fuse", &a, &b));
    }
    let axis = tape.shape(z_pdf).len() - 1;
    let both = tape.concat(&[z_pdf, z_adt], axis)?;
    let g = tape.matmul(both, w_gate)?;
    let g = tape.add(g, b_gate)?;
    let g = tape.sigmoid(g)?;
    // G⊙Zp + (1−G)⊙Za = Za + G⊙(Zp − Za)
    let diff = tape.sub(z_pdf, z_adt)?;
    let gated = tape.mul(g, diff)?;
    tape.add(z_adt, gated)
}

/// Attention over ranges, each `[..., N, d]`. Returns the aggregate and the
/// weights `[..., N, M]`.
pub fn multi_range_attention<T: Scalar>(
    tape: &mut Tape<T>,
    ranges: &[Var],
    w_a: Var,
    b_a: Var,
    v: Var,
) -> Result<(Var, Var)> {
    let m = ranges.len();
    if m == 0 {
        return Err(Error::invalid("multi_range_attention", "no ranges"));
    }
    let shape = tape.shape(ranges[0]).to_vec();
    let rank = shape.len();
    let d = shape[rank - 1];
    let lead: usize = shape[..rank - 1].iter().product();
    // [..., N, M, d]
    let z = tape.stack(ranges, rank - 1)?;
    let h = tape.matmul(z, w_a)?;
    let h = tape.add(h, b_a)?;
    let h = tape.tanh(h)?;
    let v_col = tape.reshape(v, &[d, 1])?;
    let s = tape.matmul(h, v_col)?;
    let mut score_shape = shape[..rank - 1].to_vec();
    score_shape.push(m);
    let s = tape.reshape(s, &score_shape)?;
    let alpha = tape.softmax(s, rank - 1)?;
    let a3 = tape.reshape(alpha, &[lead, 1, m])?;
    let z3 = tape.reshape(z, &[lead, m, d])?;
    let y = tape.matmul(a3, z3)?;
    let y = tape.reshape(y, &shape)?;
    Ok((y, alpha))
}

/// Weights of one horizon's output head.
#[derive(Clone, Copy, Debug)]
pub struct HeadWeights {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// One output per head: `φ(Y W1 + b1) W2 + b2`. `y` is `[..., N, d]`; the
/// result is `[..., Q, N]`.
pub fn predict_heads<T: Scalar>(
    tape: &mut Tape<T>,
    y: Var,
    heads: &[HeadWeights],
    phis: &mut [Phi<'_, T>],
) -> Result<Var> {
    if heads.is_empty() || heads.len() != phis.len() {
        return Err(Error::invalid(
            "predict_heads",
            format!("{} heads with {} activations", heads.len(), phis.len()),
        ));
    }
    let shape = tape.shape(y).to_vec();
    let rank = shape.len();
    let mut outs = Vec::with_capacity(heads.len());
    for (h, phi) in heads.iter().zip(phis.iter_mut()) {
        let hidden = tape.matmul(y, h.w1)?;
        let hidden = tape.add(hidden, h.b1)?;
        let hidden = phi.apply(tape, hidden)?;
        let o = tape.matmul(hidden, h.w2)?;
        let o = tape.add(o, h.b2)?;
        // [..., N, 1] -> [..., N]
        let o = tape.reshape(o, &shape[..rank - 1])?;
        outs.push(o);
    }
    tape.stack(&outs, rank - 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_predefined, DistanceGraph, Edge};
    use crate::oracle::{check_adaptive_case, check_attention_case, check_predefined_case, phi_oracle};
    use crate::tensor::Tensor;

    #[test]
    fn predefined_matches_neighbor_loops() {
        for seed in 0..50 {
            assert!(check_predefined_case(seed) < 1e-10, "seed {seed}");
        }
    }

    #[test]
    fn adaptive_matches_neighbor_loops() {
        for seed in 0..50 {
            assert!(check_adaptive_case(seed) < 1e-10, "seed {seed}");
        }
    }

    #[test]
    fn attention_matches_loops() {
        for seed in 0..50 {
            let (dev, sum_dev) = check_attention_case(seed);
            assert!(dev < 1e-10 && sum_dev < 1e-9, "seed {seed}");
        }
    }

    fn c(tape: &mut Tape<f64>, shape: &[usize], data: &[f64]) -> Var {
        tape.param(Tensor::from_f64(shape, data).unwrap())
    }

    #[test]
    fn single_node_predefined_is_dense_layer() {
        // N=1, K=1: rows must be >= 2 for batch norm, so use two windows
        let g = DistanceGraph::new(1, vec![Edge { from: 0, to: 0, distance: 0.0 }])
            .unwrap()
            .with_sigma(1.0)
            .unwrap();
        let stjg = build_predefined::<f64>(&g, 1, 0.5).unwrap();
        let mut tape = Tape::new();
        let x = c(&mut tape, &[2, 1, 2], &[1.0, 2.0, -1.0, 0.5]);
        let w1 = c(&mut tape, &[2, 2], &[1.0, 0.0, 0.5, 1.0]);
        let w2 = c(&mut tape, &[2, 2], &[0.0, 1.0, 1.0, 0.0]);
        let b = c(&mut tape, &[2], &[0.1, -0.2]);
        let gamma = c(&mut tape, &[2], &[1.0, 1.0]);
        let beta = c(&mut tape, &[2], &[0.0, 0.0]);
        let mut stats = BatchNormStats::new(2);
        let mut ph = [Phi { gamma, beta, stats: &mut stats, training: true }];
        let w = BranchWeights { first: vec![w1], second: vec![w2], bias: b };
        let out = stjgc_predefined(&mut tape, &[x], &stjg, 1, &w, &mut ph).unwrap();
        // dense: x (W1 + W2) + b = rows [3.1, 1.8] and [-0.5, -1.2]
        let pre = vec![vec![1.0 * 1.0 + 2.0 * 1.5 + 0.1, 1.0 * 1.0 + 2.0 * 1.0 - 0.2],
                       vec![-1.0 + 0.5 * 1.5 + 0.1, -1.0 + 0.5 - 0.2]];
        let want = phi_oracle(&pre, &[1.0, 1.0], &[0.0, 0.0]);
        let got = tape.value(out);
        for r in 0..2 {
            for o in 0..2 {
                assert!((got.at(&[r, 0, o]) - want[r][o]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_weights_give_zero() {
        let mut tape = Tape::new();
        let x = c(&mut tape, &[3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let a = tape.constant(Tensor::eye(3));
        let zero = c(&mut tape, &[2, 2], &[0.0; 4]);
        let b = c(&mut tape, &[2], &[0.0; 2]);
        let gamma = c(&mut tape, &[2], &[1.0; 2]);
        let beta = c(&mut tape, &[2], &[0.0; 2]);
        let mut stats = BatchNormStats::new(2);
        let mut ph = [Phi { gamma, beta, stats: &mut stats, training: true }];
        let w = BranchWeights { first: vec![zero], second: vec![zero], bias: b };
        let out = joint_graph_conv(&mut tape, &[x], &[(a, a)], &w, &mut ph).unwrap();
        assert!(tape.value(out).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fully_masked_adaptive_gives_phi_of_bias() {
        let mut tape = Tape::new();
        let x = c(&mut tape, &[3, 1], &[1.0, 2.0, 3.0]);
        let u = c(&mut tape, &[3, 1], &[0.1, 0.2, 0.3]);
        let bint = c(&mut tape, &[1, 1], &[1.0]);
        let w1 = c(&mut tape, &[1, 1], &[2.0]);
        let b = c(&mut tape, &[1], &[0.7]);
        let gamma = c(&mut tape, &[1], &[1.0]);
        let beta = c(&mut tape, &[1], &[0.4]);
        let mut stats = BatchNormStats::new(1);
        let mut ph = [Phi { gamma, beta, stats: &mut stats, training: true }];
        let w = BranchWeights { first: vec![w1], second: vec![w1], bias: b };
        let out = stjgc_adaptive(&mut tape, &[x], &[u], bint, 100.0, &w, &mut ph).unwrap();
        // constant pre-activation b: batch norm sends it to the shift
        for v in tape.value(out).data() {
            assert!((v - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn gate_saturation_and_midpoint() {
        let mut tape = Tape::new();
        let zp = c(&mut tape, &[2, 2], &[1.0, -2.0, 3.0, 0.5]);
        let za = c(&mut tape, &[2, 2], &[-1.0, 4.0, 0.0, 2.5]);
        let w0 = c(&mut tape, &[4, 2], &[0.0; 8]);
        for (bias, expect) in [(40.0, zp), (-40.0, za)] {
            let b = c(&mut tape, &[2], &[bias; 2]);
            let out = gate_fuse(&mut tape, zp, za, w0, b).unwrap();
            let (o, e) = (tape.value(out).clone(), tape.value(expect).clone());
            for (x, y) in o.data().iter().zip(e.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        let b = c(&mut tape, &[2], &[0.0; 2]);
        let out = gate_fuse(&mut tape, zp, za, w0, b).unwrap();
        let want = [0.0, 1.0, 1.5, 1.5];
        for (x, y) in tape.value(out).data().iter().zip(want) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn attention_hand_evaluation() {
        // M=2, N=1, d=2; W_a = I, b_a = 0, v = [1, 0]
        let mut tape = Tape::new();
        let z1 = c(&mut tape, &[1, 2], &[0.5, 1.0]);
        let z2 = c(&mut tape, &[1, 2], &[-0.5, 2.0]);
        let wa = tape.param(Tensor::eye(2));
        let ba = c(&mut tape, &[2], &[0.0, 0.0]);
        let v = c(&mut tape, &[2], &[1.0, 0.0]);
        let (y, alpha) = multi_range_attention(&mut tape, &[z1, z2], wa, ba, v).unwrap();
        let (s1, s2) = (0.5f64.tanh(), (-0.5f64).tanh());
        let a1 = s1.exp() / (s1.exp() + s2.exp());
        let a2 = 1.0 - a1;
        assert!((tape.value(alpha).at(&[0, 0]) - a1).abs() < 1e-12);
        assert!((tape.value(y).at(&[0, 0]) - (0.5 * a1 - 0.5 * a2)).abs() < 1e-12);
        assert!((tape.value(y).at(&[0, 1]) - (a1 + 2.0 * a2)).abs() < 1e-12);
    }

    #[test]
    fn attention_single_and_identical_ranges() {
        let mut tape = Tape::new();
        let z = c(&mut tape, &[2, 2], &[0.3, -0.1, 0.7, 0.2]);
        let wa = c(&mut tape, &[2, 2], &[0.4, -0.3, 0.8, 0.1]);
        let ba = c(&mut tape, &[2], &[0.1, 0.2]);
        let v = c(&mut tape, &[2], &[1.0, -1.0]);
        let (y, alpha) = multi_range_attention(&mut tape, &[z], wa, ba, v).unwrap();
        assert_eq!(tape.value(y), tape.value(z));
        assert!(tape.value(alpha).data().iter().all(|a| *a == 1.0));
        let (y, alpha) = multi_range_attention(&mut tape, &[z, z, z], wa, ba, v).unwrap();
        for a in tape.value(alpha).data() {
            assert!((a - 1.0 / 3.0).abs() < 1e-15);
        }
        for (a, b) in tape.value(y).data().iter().zip(tape.value(z).data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn heads_zero_weights_and_independence() {
        let mut tape = Tape::new();
        let y = c(&mut tape, &[3, 2], &[0.1, 0.2, -0.3, 0.4, 0.5, -0.6]);
        let gamma = c(&mut tape, &[2], &[1.0; 2]);
        let beta = c(&mut tape, &[2], &[0.0; 2]);
        let zero_w1 = c(&mut tape, &[2, 2], &[0.0; 4]);
        let zero_w2 = c(&mut tape, &[2, 1], &[0.0; 2]);
        let b1 = c(&mut tape, &[2], &[0.0; 2]);
        let b2a = c(&mut tape, &[1], &[1.5]);
        let b2b = c(&mut tape, &[1], &[-2.0]);
        let heads = [
            HeadWeights { w1: zero_w1, b1, w2: zero_w2, b2: b2a },
            HeadWeights { w1: zero_w1, b1, w2: zero_w2, b2: b2b },
        ];
        let (mut s1, mut s2) = (BatchNormStats::new(2), BatchNormStats::new(2));
        let mut ph = [
            Phi { gamma, beta, stats: &mut s1, training: true },
            Phi { gamma, beta, stats: &mut s2, training: true },
        ];
        let out = predict_heads(&mut tape, y, &heads, &mut ph).unwrap();
        assert_eq!(tape.shape(out), &[2, 3]);
        let o = tape.value(out);
        assert!((0..3).all(|n| o.at(&[0, n]) == 1.5 && o.at(&[1, n]) == -2.0));

        let w1a = c(&mut tape, &[2, 2], &[1.0, -1.0, 0.5, 2.0]);
        let w1b = c(&mut tape, &[2, 2], &[-0.7, 0.3, 1.2, 0.1]);
        let w2 = c(&mut tape, &[2, 1], &[1.0, 1.0]);
        let heads = [
            HeadWeights { w1: w1a, b1, w2, b2: b2a },
            HeadWeights { w1: w1b, b1, w2, b2: b2a },
        ];
        let mut ph = [
            Phi { gamma, beta, stats: &mut s1, training: true },
            Phi { gamma, beta, stats: &mut s2, training: true },
        ];
        let out = predict_heads(&mut tape, y, &heads, &mut ph).unwrap();
        let o = tape.value(out);
        assert!((0..3).any(|n| o.at(&[0, n]) != o.at(&[1, n])));
    }

    #[test]
    fn head_hand_evaluation() {
        // Q=1, d=1, two nodes; batch norm over [y*w1+b1] then ReLU
        let mut tape = Tape::new();
        let y = c(&mut tape, &[2, 1], &[1.0, 3.0]);
        let w1 = c(&mut tape, &[1, 1], &[2.0]);
        let b1 = c(&mut tape, &[1], &[1.0]);
        let w2 = c(&mut tape, &[1, 1], &[-3.0]);
        let b2 = c(&mut tape, &[1], &[0.5]);
        let gamma = c(&mut tape, &[1], &[1.0]);
        let beta = c(&mut tape, &[1], &[0.0]);
        let mut s = BatchNormStats::new(1);
        let mut ph = [Phi { gamma, beta, stats: &mut s, training: true }];
        let out = predict_heads(&mut tape, y, &[HeadWeights { w1, b1, w2, b2 }], &mut ph).unwrap();
        // hidden 3 and 7: mean 5, var 4, normalized -1/+1 (scaled by 2/sqrt(4+eps))
        let z = 2.0 / (4.0f64 + 1e-5).sqrt();
        let o = tape.value(out);
        assert!((o.at(&[0, 0]) - 0.5).abs() < 1e-12);
        assert!((o.at(&[0, 1]) - (0.5 - 3.0 * z)).abs() < 1e-12);
    }
}
