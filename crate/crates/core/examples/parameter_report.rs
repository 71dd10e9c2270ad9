//! Parameter counts per group and the per-module cost terms for a 307-node,
//! 3-channel network with d=64 and K=3.
//!
//! cargo run --release --example parameter_report

use stjgcn::graph::{build_predefined, DistanceGraph, Edge};
use stjgcn::model::{cost_terms, count_parameters, plan_dilations, ModelConfig, Stjgcn};

fn main() -> stjgcn::Result<()> {
    let nodes = 307;
    let edges: Vec<Edge> = (0..nodes)
        .map(|i| Edge { from: i, to: (i + 1) % nodes, distance: 1.0 + (i % 7) as f64 })
        .collect();
    let edge_count = edges.len();
    let graph = DistanceGraph::new(nodes, edges)?;
    let layers = plan_dilations(12, 3)?;
    let cfg = ModelConfig {
        nodes,
        channels: 3,
        hidden: 64,
        input_len: 12,
        horizon: 12,
        kernel: 3,
        dilations: layers.dilations.clone(),
        delta_adt: 0.5,
        slots_per_day: 288,
    };
    let stjg = build_predefined::<f32>(&graph, cfg.required_gaps()?, 0.5)?;
    let net = Stjgcn::<f32>::new(cfg, stjg, 0)?;
    let count = count_parameters(net.params());
    println!("dilations {:?}", layers.dilations);
    for g in &count.groups {
        println!("{:<20} {:>8}", g.group, g.count);
    }
    println!("{:<20} {:>8}", "total", count.total);
    for c in cost_terms(nodes, edge_count, 64, 3, layers.layers(), 12) {
        println!("{:<26} {:<22} {:.3e}", c.module, c.formula, c.value);
    }
    Ok(())
}
