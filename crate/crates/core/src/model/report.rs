use serde::Serialize;

use crate::params::ParamSet;
use crate::tensor::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupCount {
    pub group: String,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamCount {
    pub total: usize,
    /// In order of first appearance.
    pub groups: Vec<GroupCount>,
}

impl ParamCount {
    pub fn group(&self, name: &str) -> Option<usize> {
        self.groups.iter().find(|g| g.group == name).map(|g| g.count)
    }
}

/// Trainable scalars, in total and per group.
pub fn count_parameters<T: Scalar>(params: &ParamSet<T>) -> ParamCount {
    let mut groups: Vec<GroupCount> = Vec::new();
    for e in params.entries() {
        match groups.iter_mut().find(|g| g.group == e.group) {
            Some(g) => g.count += e.value.len(),
            None => groups.push(GroupCount {
                group: e.group.clone(),
                count: e.value.len(),
            }),
        }
    }
    ParamCount {
        total: params.scalar_count(),
        groups,
    }
}

/// One asymptotic cost term evaluated with unit constants.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostTerm {
    pub module: &'static str,
    pub formula: &'static str,
    pub value: f64,
}

/// Per-module multiply-count estimates for one forward step.
pub fn cost_terms(
    nodes: usize,
    edges: usize,
    hidden: usize,
    kernel: usize,
    layers: usize,
    horizon: usize,
) -> Vec<CostTerm> {
    let (n, e, d, k, m, q) = (
        nodes as f64,
        edges as f64,
        hidden as f64,
        kernel as f64,
        layers as f64,
        horizon as f64,
    );
    vec![
        CostTerm {
            module: "graph construction",
            formula: "N*d^2 + N^2*d",
            value: n * d * d + n * n * d,
        },
        CostTerm {
            module: "joint graph convolution",
            formula: "K*(|E|*d + N*d^2)",
            value: k * (e * d + n * d * d),
        },
        CostTerm {
            module: "prediction",
            formula: "N*(M*d + Q*d^2)",
            value: n * (m * d + q * d * d),
        },
    ]
}
