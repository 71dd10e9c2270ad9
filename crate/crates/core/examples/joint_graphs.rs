//! Distance-kernel adjacency across time gaps, and a learned adjacency from
//! random node embeddings.
//!
//! cargo run --release --example joint_graphs

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stjgcn::graph::{build_adaptive, build_predefined, DistanceGraph, Edge};
use stjgcn::{Tape, Tensor};

fn show(name: &str, a: &Tensor<f64>) {
    let n = a.shape()[0];
    println!("{name}");
    for row in a.data().chunks(n) {
        println!("  {}", row.iter().map(|v| format!("{v:6.3}")).collect::<Vec<_>>().join(" "));
    }
}

fn main() -> stjgcn::Result<()> {
    let edges = [(0, 1, 1.0), (1, 2, 2.0), (2, 3, 1.5), (3, 0, 3.0), (1, 0, 1.2)]
        .iter()
        .map(|&(from, to, distance)| Edge { from, to, distance })
        .collect();
    let graph = DistanceGraph::new(4, edges)?;
    println!("std of distances = {:.4}", graph.sigma());
    let graph = graph.with_sigma(2.0)?;

    let stjg = build_predefined::<f64>(&graph, 3, 0.1)?;
    println!("non-zero entries per gap: {:?}", stjg.edge_counts());
    for k in 0..stjg.gaps() {
        show(&format!("gap {k}: kernel weights"), &stjg.raw[k]);
    }
    show("gap 1: normalised for messages from t-1 to t", &stjg.forward[1]);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tape = Tape::new();
    let past = tape.constant(Tensor::uniform(&[4, 3], -1.0, 1.0, &mut rng));
    let now = tape.constant(Tensor::uniform(&[4, 3], -1.0, 1.0, &mut rng));
    let b = tape.constant(Tensor::uniform(&[3, 3], -1.0, 1.0, &mut rng));
    let adaptive = build_adaptive(&mut tape, past, now, b, 0.0)?;
    show("adaptive adjacency, scores below 0 masked", tape.value(adaptive));
    Ok(())
}
