//! Which input steps reach each layer's last hidden state: perturb one input
//! step at a time and compare states bit for bit.
//!
//! cargo run --release --example receptive_field

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stjgcn::data::Calendar;
use stjgcn::graph::{build_predefined, DistanceGraph, Edge};
use stjgcn::model::{Batch, ModelConfig, Stjgcn};
use stjgcn::{Tape, Tensor};

fn last_states(net: &mut Stjgcn<f64>, cal: &Calendar, batch: &Batch<f64>) -> stjgcn::Result<Vec<Tensor<f64>>> {
    let mut tape = Tape::new();
    let vars = net.params().bind_frozen(&mut tape);
    let f = net.forward(&mut tape, &vars, cal, batch, false)?;
    Ok(f.ranges.iter().map(|v| tape.value(*v).clone()).collect())
}

fn main() -> stjgcn::Result<()> {
    let edges = (0..3).map(|i| Edge { from: i, to: (i + 1) % 3, distance: 1.0 + i as f64 }).collect();
    let graph = DistanceGraph::new(3, edges)?;
    let cfg = ModelConfig {
        nodes: 3,
        channels: 1,
        hidden: 4,
        input_len: 12,
        horizon: 1,
        kernel: 2,
        dilations: vec![2, 4, 4, 4],
        delta_adt: -10.0,
        slots_per_day: 288,
    };
    let mut net = Stjgcn::new(cfg.clone(), build_predefined(&graph, cfg.required_gaps()?, 0.1)?, 1)?;
    let start = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let cal = Calendar::new(start, 5, 288)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let batch = Batch {
        inputs: Tensor::uniform(&[2, 12, 3, 1], -1.0, 1.0, &mut rng),
        times: (0..2).flat_map(|w| (0..12).map(move |t| 20 * w + t)).collect(),
    };
    // one training pass fills the batch-norm running statistics
    {
        let mut tape = Tape::new();
        let vars = net.params().bind(&mut tape);
        net.forward(&mut tape, &vars, &cal, &batch, true)?;
    }

    let base = last_states(&mut net, &cal, &batch)?;
    println!("layer  input steps reaching the last state (x = reaches)");
    let mut reach = vec![String::new(); base.len()];
    for pos in 0..12 {
        let mut pert = batch.clone();
        for w in 0..2 {
            for n in 0..3 {
                let v = pert.inputs.at(&[w, pos, n, 0]);
                pert.inputs.set(&[w, pos, n, 0], v + 1.0);
            }
        }
        let got = last_states(&mut net, &cal, &pert)?;
        for (m, (a, b)) in base.iter().zip(&got).enumerate() {
            reach[m].push(if a == b { '.' } else { 'x' });
        }
    }
    for (m, r) in reach.iter().enumerate() {
        println!("{m:>5}  {r}");
    }
    Ok(())
}
