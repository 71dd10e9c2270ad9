//! Dilation schedules for the causal layer stack.
//!
//! Layer `m` emits hidden states on a grid of stride `dilations[m]` and reads
//! `kernel` taps from the layer below, spaced by that layer's stride (the
//! first layer reads adjacent input steps). With `kernel = 2` and dilations
//! `{2, 4, 4, 4}` the taps are spaced `{1, 2, 4, 4}` and the last layer's
//! final position sees all 12 input steps.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub input_len: usize,
    pub kernel: usize,
    pub dilations: Vec<usize>,
}

impl LayerConfig {
    pub fn new(input_len: usize, kernel: usize, dilations: Vec<usize>) -> Result<Self> {
        let cfg = Self {
            input_len,
            kernel,
            dilations,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 || self.kernel == 0 {
            return Err(Error::config("k", "input length and kernel size must be positive"));
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return Err(Error::config(
                "dilations",
                format!("need at least one positive dilation, got {:?}", self.dilations),
            ));
        }
        let span: usize = 1 + (self.kernel - 1) * self.dilations.iter().sum::<usize>();
        if span < self.input_len {
            return Err(Error::config(
                "dilations",
                format!(
                    "1 + (K-1)*sum(dilations) = {span} does not cover {} inputs",
                    self.input_len
                ),
            ));
        }
        let seen = self.inputs_reaching_output();
        if seen.len() != self.input_len {
            let missing: Vec<usize> = (0..self.input_len).filter(|p| !seen.contains(p)).collect();
            return Err(Error::config(
                "dilations",
                format!(
                    "{:?} with kernel {} never reads input positions {missing:?}",
                    self.dilations, self.kernel
                ),
            ));
        }
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.dilations.len()
    }

    /// Spacing between the taps each layer reads: 1 for the first layer,
    /// then the stride of the layer below.
    pub fn tap_spacing(&self) -> Vec<usize> {
        let mut s = vec![1];
        s.extend_from_slice(&self.dilations[..self.dilations.len() - 1]);
        s
    }

    /// Largest time gap between a layer's output step and one of its taps.
    pub fn max_gap(&self) -> usize {
        self.tap_spacing().iter().max().copied().unwrap_or(1) * (self.kernel - 1)
    }

    pub fn receptive_field(&self) -> usize {
        1 + (self.kernel - 1) * self.tap_spacing().iter().sum::<usize>()
    }

    /// Output positions each layer must compute so that the last layer's
    /// final position and every layer's own final position are available.
    pub fn positions(&self) -> Vec<Vec<usize>> {
        let last = self.input_len - 1;
        let spacing = self.tap_spacing();
        let m = self.layers();
        let mut need: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); m];
        need[m - 1].insert(last);
        for layer in (1..m).rev() {
            let mut below = BTreeSet::from([last]);
            for &t in &need[layer] {
                for j in 0..self.kernel {
                    if let Some(src) = t.checked_sub(j * spacing[layer]) {
                        below.insert(src);
                    }
                }
            }
            need[layer - 1] = below;
        }
        need.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    /// Input positions read (through the stack) by the final output.
    pub fn inputs_reaching_output(&self) -> BTreeSet<usize> {
        let positions = self.positions();
        let spacing = self.tap_spacing();
        let mut reach = BTreeSet::from([self.input_len - 1]);
        for layer in (0..self.layers()).rev() {
            let mut below = BTreeSet::new();
            for &t in &reach {
                for j in 0..self.kernel {
                    if let Some(src) = t.checked_sub(j * spacing[layer]) {
                        below.insert(src);
                    }
                }
            }
            reach = below;
        }
        debug_assert!(positions[0].iter().all(|&p| p < self.input_len));
        reach
    }
}

/// Smallest stack whose final output covers all `input_len` steps.
///
/// Tap spacing grows geometrically (`1, K, K², …`) and the last spacing is
/// capped so coverage first meets or exceeds `input_len`; the reported
/// dilations are the resulting output strides.
pub fn plan_dilations(input_len: usize, kernel: usize) -> Result<LayerConfig> {
    if input_len < 2 || kernel < 2 {
        return Err(Error::config(
            "k",
            format!("planning needs P >= 2 and K >= 2, got P = {input_len}, K = {kernel}"),
        ));
    }
    if input_len < kernel {
        return Err(Error::config(
            "k",
            format!("kernel size {kernel} exceeds input length {input_len}"),
        ));
    }
    let mut spacing = vec![1usize];
    let mut span = kernel;
    while span < input_len {
        let remaining = (input_len - span).div_ceil(kernel - 1);
        let next = span.min(remaining);
        spacing.push(next);
        span += (kernel - 1) * next;
    }
    let mut dilations: Vec<usize> = spacing[1..].to_vec();
    dilations.push(*spacing.last().unwrap());
    LayerConfig::new(input_len, kernel, dilations)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute force: walk every path of taps down from the final position.
    fn reachable(cfg: &LayerConfig) -> BTreeSet<usize> {
        fn walk(cfg: &LayerConfig, layer: usize, pos: usize, out: &mut BTreeSet<usize>) {
            let spacing = if layer == 0 { 1 } else { cfg.dilations[layer - 1] };
            for j in 0..cfg.kernel {
                let Some(src) = pos.checked_sub(j * spacing) else { continue };
                if layer == 0 {
                    out.insert(src);
                } else {
                    walk(cfg, layer - 1, src, out);
                }
            }
        }
        let mut out = BTreeSet::new();
        walk(cfg, cfg.layers() - 1, cfg.input_len - 1, &mut out);
        out
    }

    #[test]
    fn reference_schedule() {
        let cfg = plan_dilations(12, 2).unwrap();
        assert_eq!(cfg.dilations, vec![2, 4, 4, 4]);
        assert_eq!(cfg.layers(), 4);
        assert_eq!(cfg.tap_spacing(), vec![1, 2, 4, 4]);
        assert_eq!(cfg.receptive_field(), 12);
        assert_eq!(reachable(&cfg).len(), 12);
    }

    #[test]
    fn minimal_schedule() {
        let cfg = plan_dilations(2, 2).unwrap();
        assert_eq!(cfg.dilations, vec![1]);
    }

    #[test]
    fn kernel_three_covers_everything() {
        let cfg = plan_dilations(12, 3).unwrap();
        let all: BTreeSet<usize> = (0..12).collect();
        assert_eq!(reachable(&cfg), all);
        assert!(1 + 2 * cfg.dilations.iter().sum::<usize>() >= 12);
        assert_eq!(cfg.dilations, vec![3, 2, 2]);
    }

    #[test]
    fn planner_always_covers() {
        for p in 2..40 {
            for k in 2..6 {
                if p < k {
                    assert!(plan_dilations(p, k).is_err());
                    continue;
                }
                let cfg = plan_dilations(p, k).unwrap();
                assert_eq!(reachable(&cfg).len(), p, "P={p} K={k}");
                assert_eq!(cfg.inputs_reaching_output(), reachable(&cfg));
            }
        }
    }

    #[test]
    fn gapped_schedule_rejected() {
        // standard dilated reading with stride-2 first taps skips even steps
        let err = LayerConfig::new(12, 2, vec![4, 4, 4, 4]).unwrap_err();
        assert!(err.to_string().contains("never reads"), "{err}");
        assert!(LayerConfig::new(12, 2, vec![1]).is_err());
        assert!(LayerConfig::new(1, 1, vec![1]).is_ok());
    }

    #[test]
    fn positions_include_final_step() {
        let cfg = plan_dilations(12, 2).unwrap();
        let pos = cfg.positions();
        assert_eq!(pos[3], vec![11]);
        assert_eq!(pos[2], vec![7, 11]);
        assert_eq!(pos[1], vec![3, 7, 11]);
        assert_eq!(pos[0], vec![1, 3, 5, 7, 9, 11]);
    }
}
