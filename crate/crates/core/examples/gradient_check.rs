//! Finite-difference check of every parameter group of a tiny network, in
//! both precisions.
//!
//! cargo run --release --example gradient_check

use stjgcn::cli::{gradcheck_model, gradcheck_tolerance};
use stjgcn::data::Precision;
use stjgcn::model::{plan_dilations, ModelConfig};

fn main() -> stjgcn::Result<()> {
    let cfg = ModelConfig {
        nodes: 4,
        channels: 1,
        hidden: 8,
        input_len: 8,
        horizon: 2,
        kernel: 2,
        dilations: plan_dilations(8, 2)?.dilations,
        delta_adt: -10.0,
        slots_per_day: 288,
    };
    for precision in [Precision::F64, Precision::F32] {
        let (threshold, step) = gradcheck_tolerance(precision);
        let report = match precision {
            Precision::F64 => gradcheck_model::<f64>(&cfg, 0, step, threshold)?,
            Precision::F32 => gradcheck_model::<f32>(&cfg, 0, step, threshold)?,
        };
        println!("{precision:?}: threshold {threshold:e}, passed {}", report.passed());
        for g in &report.groups {
            println!("  {:<18} {:.2e}  ({} entries)", g.name, g.max_rel_error, g.checked);
        }
    }
    Ok(())
}
