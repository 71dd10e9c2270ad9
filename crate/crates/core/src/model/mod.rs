//! The forecasting network.

pub mod checkpoint;
pub mod layers;
pub mod network;
pub mod report;
pub mod schedule;

pub use checkpoint::{ArrayData, Checkpoint, NamedArray};
pub use layers::{
    gate_fuse, joint_graph_conv, multi_range_attention, predict_heads, stjgc_adaptive,
    stjgc_predefined, BranchWeights, HeadWeights, Phi,
};
pub use network::{Batch, Forward, ModelConfig, Stjgcn};
pub use report::{cost_terms, count_parameters, CostTerm, ParamCount};
pub use schedule::{plan_dilations, LayerConfig};
