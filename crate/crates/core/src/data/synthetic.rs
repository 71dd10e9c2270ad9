//! Desk-scale stand-in for highway sensor data.
//!
//! Nodes sit on a ring with a few random chords. Each node's flow is a
//! daily profile (two harmonics, phase drifting along the ring) scaled by a
//! per-node level, plus an autoregressive residual that diffuses over the
//! graph: `r_t = a·r_{t-1} + c·mean_{neighbours} r_{t-1} + noise·ε_t`.
//! With zero noise the residual stays at zero and the series is exactly
//! periodic with one-day period.

use std::f64::consts::PI;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::calendar::MINUTES_PER_DAY;
use super::dataset::TrafficDataset;
use crate::error::{Error, Result};
use crate::graph::{DistanceGraph, Edge};

const SELF_DECAY: f64 = 0.55;
const COUPLING: f64 = 0.35;
/// Innovation standard deviation relative to the node level, at noise 1.
const INNOVATION: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub nodes: usize,
    pub steps: usize,
    pub interval_minutes: u32,
    pub seed: u64,
    /// Multiplier on the residual innovations; 0 gives a periodic series.
    pub noise: f64,
    pub start: NaiveDateTime,
}

impl SynthConfig {
    pub fn new(nodes: usize, steps: usize, interval_minutes: u32, seed: u64) -> Self {
        Self {
            nodes,
            steps,
            interval_minutes,
            seed,
            noise: 1.0,
            start: NaiveDate::from_ymd_opt(2018, 1, 1)
                .unwrap()
                .and_hms_opt(0, 0, 0)
                .unwrap(),
        }
    }
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<(TrafficDataset, DistanceGraph)> {
    let n = cfg.nodes;
    if n < 2 {
        return Err(Error::Data("synthetic data needs at least 2 nodes".into()));
    }
    if cfg.interval_minutes == 0 || MINUTES_PER_DAY % cfg.interval_minutes != 0 {
        return Err(Error::Data(format!(
            "interval of {} minutes does not divide 24h",
            cfg.interval_minutes
        )));
    }
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
        return Err(Error::Data(format!("noise {} must be non-negative", cfg.noise)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut edges = Vec::new();
    let add = |from: usize, to: usize, rng: &mut ChaCha8Rng, lo: f64, hi: f64, edges: &mut Vec<Edge>| {
        if from != to && !edges.iter().any(|e: &Edge| e.from == from && e.to == to) {
            edges.push(Edge { from, to, distance: rng.gen_range(lo..hi) });
        }
    };
    for i in 0..n {
        let j = (i + 1) % n;
        add(i, j, &mut rng, 1.0, 3.0, &mut edges);
        add(j, i, &mut rng, 1.0, 3.0, &mut edges);
    }
    if n >= 6 {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for pair in order.chunks(2).take(n / 5) {
            if let [a, b] = *pair {
                let ring_neighbours = (a + 1) % n == b || (b + 1) % n == a;
                if !ring_neighbours {
                    add(a, b, &mut rng, 2.0, 5.0, &mut edges);
                    add(b, a, &mut rng, 2.0, 5.0, &mut edges);
                }
            }
        }
    }
    let mut neighbours = vec![Vec::new(); n];
    for e in &edges {
        neighbours[e.to].push(e.from);
    }

    let levels: Vec<f64> = (0..n).map(|_| rng.gen_range(200.0..400.0)).collect();
    let amp1: Vec<f64> = (0..n).map(|_| rng.gen_range(0.35..0.55)).collect();
    let amp2: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..0.2)).collect();
    let phase: Vec<f64> = (0..n)
        .map(|i| 0.6 * (2.0 * PI * i as f64 / n as f64).sin() + rng.gen_range(-0.05..0.05))
        .collect();

    let slots = (MINUTES_PER_DAY / cfg.interval_minutes) as usize;
    let start_slot = (cfg.start.time().num_seconds_from_midnight() / 60 / cfg.interval_minutes) as usize;
    let mut residual = vec![0.0; n];
    let mut values = Vec::with_capacity(cfg.steps * n);
    for t in 0..cfg.steps {
        let slot = (start_slot + t) % slots;
        let x = 2.0 * PI * slot as f64 / slots as f64;
        let mut next = vec![0.0; n];
        for i in 0..n {
            let spread = if neighbours[i].is_empty() {
                0.0
            } else {
                neighbours[i].iter().map(|&j| residual[j]).sum::<f64>() / neighbours[i].len() as f64
            };
            let eps: f64 = rng.sample(StandardNormal);
            next[i] = SELF_DECAY * residual[i] + COUPLING * spread + cfg.noise * INNOVATION * eps;
        }
        residual = next;
        for i in 0..n {
            let daily = 1.0 + amp1[i] * (x - PI / 2.0 + phase[i]).sin() + amp2[i] * (2.0 * x + phase[i]).sin();
            values.push(levels[i] * (daily + residual[i]));
        }
    }
    let ds = TrafficDataset::new(
        cfg.steps,
        n,
        vec!["flow".to_string()],
        values,
        cfg.start,
        cfg.interval_minutes,
    )?;
    Ok((ds, DistanceGraph::new(n, edges)?))
}


/// Lag-1 correlation between `a[t]` and `b[t-1]`.
pub fn lagged_correlation(a: &[f64], b: &[f64]) -> f64 {
    let x = &a[1..];
    let y = &b[..b.len() - 1];
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (u, v) in x.iter().zip(y) {
        sxy += (u - mx) * (v - my);
        sxx += (u - mx) * (u - mx);
        syy += (v - my) * (v - my);
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig::new(6, 300, 5, 4);
        let (a, ga) = generate_synthetic(&cfg).unwrap();
        let (b, gb) = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ga, gb);
        let (c, _) = generate_synthetic(&SynthConfig { seed: 5, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_is_periodic() {
        let cfg = SynthConfig { noise: 0.0, ..SynthConfig::new(5, 3 * 288, 5, 1) };
        let (ds, _) = generate_synthetic(&cfg).unwrap();
        for t in 0..2 * 288 {
            for n in 0..5 {
                assert_eq!(ds.value(t, n, 0), ds.value(t + 288, n, 0));
            }
        }
        assert!(ds.values().iter().all(|v| *v > 0.0));
    }

    /// Residual (reading minus the noiseless profile) of node `i`.
    fn residuals(cfg: &SynthConfig) -> (Vec<Vec<f64>>, DistanceGraph) {
        let (noisy, g) = generate_synthetic(cfg).unwrap();
        let (clean, _) = generate_synthetic(&SynthConfig { noise: 0.0, ..cfg.clone() }).unwrap();
        let r = (0..cfg.nodes)
            .map(|i| (0..cfg.steps).map(|t| noisy.value(t, i, 0) - clean.value(t, i, 0)).collect())
            .collect();
        (r, g)
    }

    #[test]
    fn linked_pairs_correlate_more() {
        let cfg = SynthConfig::new(10, 2016, 5, 1);
        let (r, g) = residuals(&cfg);
        let linked: std::collections::HashSet<(usize, usize)> =
            g.edges().iter().map(|e| (e.to, e.from)).collect();
        let (mut lsum, mut lcount, mut usum, mut ucount) = (0.0, 0, 0.0, 0);
        for i in 0..10 {
            for j in 0..10 {
                if i == j {
                    continue;
                }
                let c = lagged_correlation(&r[i], &r[j]);
                if linked.contains(&(i, j)) {
                    lsum += c;
                    lcount += 1;
                } else {
                    usum += c;
                    ucount += 1;
                }
            }
        }
        let (linked_mean, unlinked_mean) = (lsum / lcount as f64, usum / ucount as f64);
        assert!(linked_mean - unlinked_mean > 0.25, "{linked_mean} vs {unlinked_mean}");
        // regression values of the seed-1 instance
        assert!((linked_mean - 0.38416).abs() < 1e-4, "{linked_mean}");
        assert!((unlinked_mean - 0.10375).abs() < 1e-4, "{unlinked_mean}");
    }
}
