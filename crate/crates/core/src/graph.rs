//! Joint adjacency matrices connecting nodes at two (possibly equal) time steps.
//!
//! Two kinds are built here:
//!
//! - [`PredefinedStjg`]: a Gaussian kernel over road distances in which the
//!   distance is scaled by `k + 1` for a time gap of `k` steps, then
//!   thresholded and normalised in the forward and backward directions.
//!   It depends on the gap only, never on absolute time.
//! - the adaptive matrix of [`build_adaptive`]: a row-wise masked softmax of
//!   `U_a B U_bᵀ` where `U_a`, `U_b` are time-conditioned node embeddings
//!   (see [`embed`]) and `B` is a learned interaction matrix.

use std::collections::HashSet;

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::data::calendar::Calendar;
use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamSet};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub distance: f64,
}

/// Directed road-distance edge list.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceGraph {
    node_count: usize,
    edges: Vec<Edge>,
    sigma: f64,
    degenerate: bool,
}

impl DistanceGraph {
    /// Validates the edges and computes σ as the population standard
    /// deviation of the listed distances.
    pub fn new(node_count: usize, edges: Vec<Edge>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::Graph(
                "empty edge list: distance standard deviation is undefined".into(),
            ));
        }
        let mut seen = HashSet::new();
        for e in &edges {
            if e.from >= node_count || e.to >= node_count {
                return Err(Error::Graph(format!(
                    "edge {}->{} references a node outside 0..{node_count}",
                    e.from, e.to
                )));
            }
            if !(e.distance >= 0.0 && e.distance.is_finite()) {
                return Err(Error::Graph(format!(
                    "edge {}->{} has invalid distance {}",
                    e.from, e.to, e.distance
                )));
            }
            if !seen.insert((e.from, e.to)) {
                return Err(Error::Graph(format!("duplicate edge {}->{}", e.from, e.to)));
            }
        }
        let n = edges.len() as f64;
        let mean = edges.iter().map(|e| e.distance).sum::<f64>() / n;
        let var = edges.iter().map(|e| (e.distance - mean).powi(2)).sum::<f64>() / n;
        let sigma = var.sqrt();
        Ok(Self {
            node_count,
            edges,
            sigma,
            degenerate: sigma == 0.0,
        })
    }

    /// Replace the computed σ, e.g. when all listed distances are equal.
    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Graph(format!("sigma override must be positive, got {sigma}")));
        }
        self.sigma = sigma;
        self.degenerate = false;
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Dense distance matrix; `None` for absent pairs, 0 on the diagonal
    /// unless the list says otherwise.
    pub fn dense(&self) -> Vec<Option<f64>> {
        let n = self.node_count;
        let mut d = vec![None; n * n];
        for i in 0..n {
            d[i * n + i] = Some(0.0);
        }
        for e in &self.edges {
            d[e.from * n + e.to] = Some(e.distance);
        }
        d
    }
}

/// Unthresholded kernel weight for time gap `k`.
pub fn kernel_weight(distance: f64, sigma: f64, k: usize) -> f64 {
    let scaled = (k as f64 + 1.0) * distance;
    (-(scaled * scaled) / (sigma * sigma)).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// `D^{-1/2} A D^{-1/2}` with out-degrees (forward) or
/// `D^{-1/2} Aᵀ D^{-1/2}` with in-degrees (backward). Zero degrees are
/// replaced by 1, which leaves the corresponding rows and columns zero.
pub fn normalize_directed<T: Scalar>(a: &Tensor<T>, direction: Direction) -> Result<Tensor<T>> {
    let shape = a.shape();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::invalid("normalize_directed", format!("not square: {shape:?}")));
    }
    let n = shape[0];
    let data = a.data();
    if let Some(bad) = data.iter().find(|v| **v < T::zero()) {
        return Err(Error::invalid(
            "normalize_directed",
            format!("negative adjacency entry {bad}"),
        ));
    }
    let mut degree = vec![T::zero(); n];
    for i in 0..n {
        for j in 0..n {
            let v = data[i * n + j];
            match direction {
                Direction::Forward => degree[i] = degree[i] + v,
                Direction::Backward => degree[j] = degree[j] + v,
            }
        }
    }
    let inv_sqrt: Vec<T> = degree
        .iter()
        .map(|&d| {
            let d = if d == T::zero() { T::one() } else { d };
            T::one() / d.sqrt()
        })
        .collect();
    let mut out = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            let v = match direction {
                Direction::Forward => data[i * n + j],
                Direction::Backward => data[j * n + i],
            };
            out[i * n + j] = inv_sqrt[i] * v * inv_sqrt[j];
        }
    }
    Tensor::new(&[n, n], out)
}

/// Distance-kernel joint adjacency for time gaps `0..gaps()`.
#[derive(Clone, Debug, PartialEq)]
pub struct PredefinedStjg<T> {
    pub threshold: f64,
    pub raw: Vec<Tensor<T>>,
    pub forward: Vec<Tensor<T>>,
    pub backward: Vec<Tensor<T>>,
}

impl<T: Scalar> PredefinedStjg<T> {
    pub fn gaps(&self) -> usize {
        self.raw.len()
    }

    pub fn node_count(&self) -> usize {
        self.raw[0].shape()[0]
    }

    /// Non-zero entries of the thresholded matrix for each gap.
    pub fn edge_counts(&self) -> Vec<usize> {
        self.raw
            .iter()
            .map(|a| a.data().iter().filter(|v| **v != T::zero()).count())
            .collect()
    }
}

/// Thresholded kernel weights for gaps `0..gaps`, plus both normalisations.
/// Weights below `threshold` and absent pairs are zero.
pub fn build_predefined<T: Scalar>(
    graph: &DistanceGraph,
    gaps: usize,
    threshold: f64,
) -> Result<PredefinedStjg<T>> {
    if gaps == 0 {
        return Err(Error::Graph("need at least one time gap".into()));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Graph(format!("threshold {threshold} outside [0, 1]")));
    }
    if graph.is_degenerate() {
        return Err(Error::Graph(
            "all distances are equal so their standard deviation is 0; pass an explicit sigma"
                .into(),
        ));
    }
    let n = graph.node_count();
    let dense = graph.dense();
    let mut raw = Vec::with_capacity(gaps);
    let mut forward = Vec::with_capacity(gaps);
    let mut backward = Vec::with_capacity(gaps);
    for k in 0..gaps {
        let data: Vec<T> = dense
            .iter()
            .map(|d| match d {
                Some(dist) => {
                    let w = kernel_weight(*dist, graph.sigma(), k);
                    if w >= threshold {
                        T::of(w)
                    } else {
                        T::zero()
                    }
                }
                None => T::zero(),
            })
            .collect();
        let a = Tensor::new(&[n, n], data)?;
        forward.push(normalize_directed(&a, Direction::Forward)?);
        backward.push(normalize_directed(&a, Direction::Backward)?);
        raw.push(a);
    }
    Ok(PredefinedStjg {
        threshold,
        raw,
        forward,
        backward,
    })
}

/// Parameter handles of the spatio-temporal embedding.
#[derive(Clone, Copy, Debug)]
pub struct EmbeddingParams {
    pub spatial: ParamId,
    pub spatial_w: ParamId,
    pub spatial_b: ParamId,
    pub time_of_day_w: ParamId,
    pub time_of_day_b: ParamId,
    pub day_of_week_w: ParamId,
    pub day_of_week_b: ParamId,
    pub nodes: usize,
    pub dim: usize,
    pub slots: usize,
}

impl EmbeddingParams {
    /// Spatial table `N×d`, projections `d→d`, `slots→d` and `7→d`.
    pub fn init<T: Scalar, R: Rng>(
        set: &mut ParamSet<T>,
        nodes: usize,
        dim: usize,
        slots: usize,
        rng: &mut R,
    ) -> Self {
        let g = "embedding";
        Self {
            spatial: set.add("embedding.spatial", g, Tensor::normal(&[nodes, dim], 0.1, rng)),
            spatial_w: set.add("embedding.spatial_w", g, Tensor::glorot(&[dim, dim], rng)),
            spatial_b: set.add("embedding.spatial_b", g, Tensor::zeros(&[dim])),
            time_of_day_w: set.add("embedding.time_of_day_w", g, Tensor::glorot(&[slots, dim], rng)),
            time_of_day_b: set.add("embedding.time_of_day_b", g, Tensor::zeros(&[dim])),
            day_of_week_w: set.add("embedding.day_of_week_w", g, Tensor::glorot(&[7, dim], rng)),
            day_of_week_b: set.add("embedding.day_of_week_b", g, Tensor::zeros(&[dim])),
            nodes,
            dim,
            slots,
        }
    }
}

/// Embeddings `U_t` for a batch of absolute time indices: `[len, N, d]`.
pub fn embed<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &Bound,
    p: &EmbeddingParams,
    calendar: &Calendar,
    times: &[usize],
) -> Result<Var> {
    if calendar.slots_per_day() != p.slots {
        return Err(Error::invalid(
            "embed",
            format!(
                "calendar has {} slots per day, embedding expects {}",
                calendar.slots_per_day(),
                p.slots
            ),
        ));
    }
    let mut slots = Vec::with_capacity(times.len());
    let mut days = Vec::with_capacity(times.len());
    for &t in times {
        let f = calendar.features(t)?;
        slots.push(f.slot);
        days.push(f.weekday);
    }
    // spatial part: [N, d]
    let proj = tape.matmul(vars[p.spatial], vars[p.spatial_w])?;
    let spatial = tape.add(proj, vars[p.spatial_b])?;
    // temporal part: [len, d], one-hot projections as row lookups
    let tod = tape.gather_rows(vars[p.time_of_day_w], &slots)?;
    let tod = tape.add(tod, vars[p.time_of_day_b])?;
    let dow = tape.gather_rows(vars[p.day_of_week_w], &days)?;
    let dow = tape.add(dow, vars[p.day_of_week_b])?;
    let temporal = tape.add(tod, dow)?;
    let temporal = tape.reshape(temporal, &[times.len(), 1, p.dim])?;
    tape.add(spatial, temporal)
}

/// Row-normalised adaptive adjacency between the node sets embedded by
/// `u_a` and `u_b` (`[..., N, d]` each). Scores below `threshold` are
/// excluded from the softmax and come out as exactly zero.
pub fn build_adaptive<T: Scalar>(
    tape: &mut Tape<T>,
    u_a: Var,
    u_b: Var,
    interaction: Var,
    threshold: f64,
) -> Result<Var> {
    if tape.shape(u_a) != tape.shape(u_b) {
        let (a, b) = (tape.shape(u_a).to_vec(), tape.shape(u_b).to_vec());
        return Err(Error::shape("build_adaptive", &a, &b));
    }
    let left = tape.matmul(u_a, interaction)?;
    let right = tape.transpose(u_b)?;
    let scores = tape.matmul(left, right)?;
    let thr = T::of(threshold);
    let mask: Vec<bool> = tape.value(scores).data().iter().map(|&s| s >= thr).collect();
    let axis = tape.shape(scores).len() - 1;
    tape.masked_softmax(scores, &mask, axis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph(edges: &[(usize, usize, f64)], n: usize) -> DistanceGraph {
        DistanceGraph::new(
            n,
            edges
                .iter()
                .map(|&(from, to, distance)| Edge { from, to, distance })
                .collect(),
        )
        .unwrap()
    }

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, data).unwrap()
    }

    #[test]
    fn sigma_is_population_std() {
        let g = graph(&[(0, 1, 1.0), (1, 2, 2.0), (2, 0, 3.0)], 3);
        // two-pass: mean 2, squared deviations 1,0,1 -> var 2/3
        let mean = (1.0 + 2.0 + 3.0) / 3.0;
        let var = [1.0f64, 2.0, 3.0].iter().map(|d| (d - mean).powi(2)).sum::<f64>() / 3.0;
        assert!((g.sigma() - var.sqrt()).abs() < 1e-15);
        assert!((g.sigma() - 0.8165).abs() < 1e-4);
    }

    #[test]
    fn edge_validation() {
        assert!(DistanceGraph::new(2, vec![]).is_err());
        let bad_id = DistanceGraph::new(2, vec![Edge { from: 0, to: 2, distance: 1.0 }]);
        assert!(bad_id.is_err());
        let neg = DistanceGraph::new(2, vec![Edge { from: 0, to: 1, distance: -1.0 }]);
        assert!(neg.is_err());
        let dup = DistanceGraph::new(
            2,
            vec![
                Edge { from: 0, to: 1, distance: 1.0 },
                Edge { from: 0, to: 1, distance: 2.0 },
            ],
        );
        assert!(dup.is_err());
        let single = graph(&[(0, 1, 4.0)], 2);
        assert!(single.is_degenerate());
        assert!(build_predefined::<f64>(&single, 1, 0.1).is_err());
        let fixed = single.with_sigma(4.0).unwrap();
        assert!(build_predefined::<f64>(&fixed, 1, 0.1).is_ok());
    }

    #[test]
    fn kernel_examples() {
        let g = graph(&[(0, 1, 1.0), (1, 0, 3.0)], 2);
        let sigma = g.sigma();
        assert_eq!(sigma, 1.0);
        // self distance 0 gives weight 1 for every gap
        let stjg = build_predefined::<f64>(&g, 3, 0.3).unwrap();
        for k in 0..3 {
            assert_eq!(stjg.raw[k].at(&[0, 0]), 1.0);
        }
        // dist = sigma, k = 0 -> exp(-1) survives 0.3
        assert!((stjg.raw[0].at(&[0, 1]) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((stjg.raw[0].at(&[0, 1]) - 0.36788).abs() < 1e-5);
        // dist = sigma, k = 1 -> exp(-4) < 0.5 is removed
        let strict = build_predefined::<f64>(&g, 2, 0.5).unwrap();
        assert!((kernel_weight(1.0, sigma, 1) - 0.01832).abs() < 1e-5);
        assert_eq!(strict.raw[1].at(&[0, 1]), 0.0);
    }

    #[test]
    fn gap_zero_is_plain_gaussian_kernel() {
        let g = graph(&[(0, 1, 2.0), (1, 2, 5.0), (2, 0, 1.5), (0, 2, 0.5)], 3);
        let stjg = build_predefined::<f64>(&g, 1, 0.0).unwrap();
        let dense = g.dense();
        for (i, d) in dense.iter().enumerate() {
            let expect = d.map_or(0.0, |d| (-(d * d) / (g.sigma() * g.sigma())).exp());
            assert_eq!(stjg.raw[0].data()[i], expect);
        }
    }

    #[test]
    fn normalisation_examples() {
        let eye = Tensor::<f64>::eye(3);
        assert_eq!(normalize_directed(&eye, Direction::Forward).unwrap(), eye);
        assert_eq!(normalize_directed(&eye, Direction::Backward).unwrap(), eye);

        // out-degrees (2, 0 -> guarded to 1): entry 2 / sqrt(2 * 1)
        let a = t(&[2, 2], &[0.0, 2.0, 0.0, 0.0]);
        let fw = normalize_directed(&a, Direction::Forward).unwrap();
        assert!((fw.at(&[0, 1]) - 2.0f64.sqrt()).abs() < 1e-15);
        assert_eq!(fw.at(&[0, 0]), 0.0);
        assert_eq!(fw.at(&[1, 0]), 0.0);
        assert_eq!(fw.at(&[1, 1]), 0.0);

        let sym = t(&[3, 3], &[1.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 1.0]);
        let f = normalize_directed(&sym, Direction::Forward).unwrap();
        let b = normalize_directed(&sym, Direction::Backward).unwrap();
        assert_eq!(f.transpose_last2().unwrap(), b);

        let neg = t(&[2, 2], &[0.0, -1.0, 0.0, 0.0]);
        assert!(normalize_directed(&neg, Direction::Forward).is_err());
    }

    #[test]
    fn weights_do_not_increase_with_gap() {
        let g = graph(&[(0, 1, 0.3), (1, 2, 1.7), (2, 3, 0.9), (3, 0, 2.4)], 4);
        let stjg = build_predefined::<f64>(&g, 5, 0.0).unwrap();
        for k in 1..5 {
            for (a, b) in stjg.raw[k - 1].data().iter().zip(stjg.raw[k].data()) {
                assert!(b <= a);
            }
        }
        assert!(stjg.forward.iter().all(|m| m.all_finite()));
    }

    #[test]
    fn adaptive_examples() {
        let mut tape = Tape::<f64>::new();
        let u = tape.constant(t(&[1, 2], &[0.3, -0.1]));
        let b = tape.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let l = build_adaptive(&mut tape, u, u, b, -10.0).unwrap();
        assert_eq!(tape.value(l).data(), &[1.0]);

        let u = tape.constant(Tensor::eye(2));
        let zero = tape.constant(Tensor::zeros(&[2, 2]));
        let l = build_adaptive(&mut tape, u, u, zero, 0.0).unwrap();
        assert_eq!(tape.value(l).data(), &[0.5, 0.5, 0.5, 0.5]);

        let ua = tape.constant(t(&[2, 1], &[1.0, 2.0]));
        let ub = tape.constant(t(&[2, 1], &[1.0, 1.0]));
        let one = tape.constant(t(&[1, 1], &[1.0]));
        let l = build_adaptive(&mut tape, ua, ub, one, 1.5).unwrap();
        assert_eq!(tape.value(l).data(), &[0.0, 0.0, 0.5, 0.5]);
    }

    fn calendar() -> Calendar {
        let start = NaiveDate::from_ymd_opt(2018, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        Calendar::new(start, 5, 288 * 14).unwrap()
    }

    #[test]
    fn embedding_depends_only_on_calendar_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut set = ParamSet::<f64>::new();
        let p = EmbeddingParams::init(&mut set, 3, 4, 288, &mut rng);
        let mut tape = Tape::new();
        let vars = set.bind(&mut tape);
        let cal = calendar();
        // 7 days apart: same slot and weekday
        let u = embed(&mut tape, &vars, &p, &cal, &[5, 5 + 7 * 288, 6]).unwrap();
        let v = tape.value(u).data();
        let block = 3 * 4;
        assert_eq!(&v[..block], &v[block..2 * block]);
        assert_ne!(&v[..block], &v[2 * block..]);
        assert!(embed(&mut tape, &vars, &p, &cal, &[cal.len()]).is_err());
    }

    #[test]
    fn zero_projections_give_zero_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut set = ParamSet::<f64>::new();
        let p = EmbeddingParams::init(&mut set, 2, 3, 288, &mut rng);
        for e in set.entries_mut() {
            if e.name != "embedding.spatial" {
                e.value = Tensor::zeros(e.value.shape());
            }
        }
        let mut tape = Tape::new();
        let vars = set.bind(&mut tape);
        let u = embed(&mut tape, &vars, &p, &calendar(), &[17]).unwrap();
        assert!(tape.value(u).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn embedding_hand_evaluation() {
        // N = 2, d = 2, identity spatial projection
        let mut set = ParamSet::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = EmbeddingParams::init(&mut set, 2, 2, 288, &mut rng);
        *set.get_mut(p.spatial) = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        *set.get_mut(p.spatial_w) = Tensor::eye(2);
        *set.get_mut(p.spatial_b) = t(&[2], &[0.5, 0.0]);
        let mut tod = Tensor::zeros(&[288, 2]);
        tod.set(&[1, 0], 10.0);
        tod.set(&[1, 1], 20.0);
        *set.get_mut(p.time_of_day_w) = tod;
        *set.get_mut(p.time_of_day_b) = Tensor::zeros(&[2]);
        let mut dow = Tensor::zeros(&[7, 2]);
        dow.set(&[0, 0], 100.0);
        *set.get_mut(p.day_of_week_w) = dow;
        *set.get_mut(p.day_of_week_b) = t(&[2], &[0.0, -1.0]);
        let mut tape = Tape::new();
        let vars = set.bind(&mut tape);
        // step 1 is 00:05 on a Monday: slot 1, weekday 0
        let u = embed(&mut tape, &vars, &p, &calendar(), &[1]).unwrap();
        let expect = [
            1.0 + 0.5 + 10.0 + 100.0,
            2.0 + 20.0 - 1.0,
            3.0 + 0.5 + 10.0 + 100.0,
            4.0 + 20.0 - 1.0,
        ];
        assert_eq!(tape.value(u).data(), &expect);
    }

    #[test]
    fn adaptive_graph_changes_with_time_of_day() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut set = ParamSet::<f64>::new();
        let p = EmbeddingParams::init(&mut set, 4, 3, 288, &mut rng);
        let b = set.add("interaction", "interaction", Tensor::glorot(&[3, 3], &mut rng));
        let mut tape = Tape::new();
        let vars = set.bind(&mut tape);
        let cal = calendar();
        let u0 = embed(&mut tape, &vars, &p, &cal, &[10]).unwrap();
        let u1 = embed(&mut tape, &vars, &p, &cal, &[11]).unwrap();
        let u2 = embed(&mut tape, &vars, &p, &cal, &[100]).unwrap();
        let first = build_adaptive(&mut tape, u0, u1, vars[b], -1e9).unwrap();
        let second = build_adaptive(&mut tape, u1, u2, vars[b], -1e9).unwrap();
        assert_ne!(tape.value(first), tape.value(second));
        for l in [first, second] {
            for row in tape.value(l).data().chunks(4) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}
