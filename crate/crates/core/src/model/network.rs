use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    gate_fuse, joint_graph_conv, multi_range_attention, predefined_pairs, predict_heads,
    BranchWeights, HeadWeights, Phi,
};
use super::schedule::LayerConfig;
use crate::autodiff::{Tape, Var};
use crate::batchnorm::BatchNormStats;
use crate::data::calendar::Calendar;
use crate::error::{Error, Result};
use crate::graph::{build_adaptive, embed, EmbeddingParams, PredefinedStjg};
use crate::params::{Bound, ParamId, ParamSet};
use crate::tensor::{Scalar, Tensor};

/// Shapes and hyperparameters that fix the parameter layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub nodes: usize,
    pub channels: usize,
    pub hidden: usize,
    pub input_len: usize,
    pub horizon: usize,
    pub kernel: usize,
    pub dilations: Vec<usize>,
    pub delta_adt: f64,
    pub slots_per_day: usize,
}

impl ModelConfig {
    pub fn layer_config(&self) -> Result<LayerConfig> {
        LayerConfig::new(self.input_len, self.kernel, self.dilations.clone())
    }

    /// Time gaps the distance graph must provide.
    pub fn required_gaps(&self) -> Result<usize> {
        Ok(self.layer_config()?.max_gap() + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("nodes", self.nodes),
            ("channels", self.channels),
            ("d", self.hidden),
            ("p", self.input_len),
            ("q", self.horizon),
            ("k", self.kernel),
            ("slots_per_day", self.slots_per_day),
        ];
        for (key, v) in checks {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if !self.delta_adt.is_finite() {
            return Err(Error::config("delta_adt", "must be finite"));
        }
        self.layer_config().map(|_| ())
    }
}

#[derive(Clone, Debug)]
struct BranchIds {
    first: Vec<ParamId>,
    second: Vec<ParamId>,
    bias: ParamId,
    bn: Vec<(ParamId, ParamId)>,
    /// Index of the first batch-norm site of this branch.
    site: usize,
}

#[derive(Clone, Debug)]
struct LayerIds {
    pdf: BranchIds,
    adt: BranchIds,
    gate_w: ParamId,
    gate_b: ParamId,
}

#[derive(Clone, Debug)]
struct HeadIds {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    bn: (ParamId, ParamId),
    site: usize,
}

#[derive(Clone, Debug)]
struct Ids {
    input_w: ParamId,
    input_b: ParamId,
    embedding: EmbeddingParams,
    interaction: ParamId,
    layers: Vec<LayerIds>,
    att_w: ParamId,
    att_b: ParamId,
    att_v: ParamId,
    heads: Vec<HeadIds>,
}

/// A batch of input windows.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    /// `[B, P, N, C]`, normalized.
    pub inputs: Tensor<T>,
    /// Absolute step index of each input position, `B × P` row-major.
    pub times: Vec<usize>,
}

impl<T: Scalar> Batch<T> {
    pub fn size(&self) -> usize {
        self.inputs.shape()[0]
    }
}

/// Everything the forward pass exposes.
#[derive(Clone, Debug)]
pub struct Forward {
    /// `[B, Q, N]` in normalized units.
    pub prediction: Var,
    /// Hidden states per layer, keyed by input position, each `[B, N, d]`.
    pub hidden: Vec<Vec<(usize, Var)>>,
    /// The final-position state of each layer.
    pub ranges: Vec<Var>,
    /// `[B, N, M]`.
    pub attention: Var,
}

/// The full network: parameters, batch-norm state and the distance graph.
#[derive(Clone, Debug)]
pub struct Stjgcn<T: Scalar> {
    config: ModelConfig,
    layer: LayerConfig,
    params: ParamSet<T>,
    bn: Vec<BatchNormStats<T>>,
    bn_names: Vec<String>,
    ids: Ids,
    predefined: PredefinedStjg<T>,
}

impl<T: Scalar> Stjgcn<T> {
    pub fn new(config: ModelConfig, predefined: PredefinedStjg<T>, seed: u64) -> Result<Self> {
        config.validate()?;
        let layer = config.layer_config()?;
        if predefined.node_count() != config.nodes {
            return Err(Error::invalid(
                "Stjgcn::new",
                format!(
                    "graph has {} nodes, model expects {}",
                    predefined.node_count(),
                    config.nodes
                ),
            ));
        }
        if predefined.gaps() < layer.max_gap() + 1 {
            return Err(Error::invalid(
                "Stjgcn::new",
                format!(
                    "graph provides {} time gaps, schedule needs {}",
                    predefined.gaps(),
                    layer.max_gap() + 1
                ),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng = &mut rng;
        let d = config.hidden;
        let mut p = ParamSet::new();
        let mut bn_names = Vec::new();

        let input_w = p.add("input.w", "input", Tensor::glorot(&[config.channels, d], rng));
        let input_b = p.add("input.b", "input", Tensor::zeros(&[d]));
        let embedding = EmbeddingParams::init(&mut p, config.nodes, d, config.slots_per_day, rng);
        let interaction = p.add("interaction", "interaction", Tensor::glorot(&[d, d], rng));

        let mut branch = |p: &mut ParamSet<T>, prefix: String, rng: &mut ChaCha8Rng| {
            let k = config.kernel;
            let site = bn_names.len();
            let first = (0..k)
                .map(|j| p.add(format!("{prefix}.w{j}_1"), &prefix, Tensor::glorot(&[d, d], rng)))
                .collect();
            let second = (0..k)
                .map(|j| p.add(format!("{prefix}.w{j}_2"), &prefix, Tensor::glorot(&[d, d], rng)))
                .collect();
            let bias = p.add(format!("{prefix}.b"), &prefix, Tensor::zeros(&[d]));
            let bn = (0..k)
                .map(|j| {
                    bn_names.push(format!("{prefix}.bn{j}"));
                    (
                        p.add(format!("{prefix}.bn{j}.gamma"), &prefix, Tensor::ones(&[d])),
                        p.add(format!("{prefix}.bn{j}.beta"), &prefix, Tensor::zeros(&[d])),
                    )
                })
                .collect();
            BranchIds {
                first,
                second,
                bias,
                bn,
                site,
            }
        };

        let mut layers = Vec::new();
        for m in 0..layer.layers() {
            let pdf = branch(&mut p, format!("layer{m}.predefined"), rng);
            let adt = branch(&mut p, format!("layer{m}.adaptive"), rng);
            let g = format!("layer{m}.gate");
            let gate_w = p.add(format!("{g}.w"), &g, Tensor::glorot(&[2 * d, d], rng));
            let gate_b = p.add(format!("{g}.b"), &g, Tensor::zeros(&[d]));
            layers.push(LayerIds {
                pdf,
                adt,
                gate_w,
                gate_b,
            });
        }
        let att_w = p.add("attention.w", "attention", Tensor::glorot(&[d, d], rng));
        let att_b = p.add("attention.b", "attention", Tensor::zeros(&[d]));
        let att_v = p.add("attention.v", "attention", Tensor::glorot(&[d], rng));
        let mut heads = Vec::new();
        for i in 0..config.horizon {
            let g = "heads";
            let site = bn_names.len();
            bn_names.push(format!("head{i}.bn"));
            heads.push(HeadIds {
                w1: p.add(format!("head{i}.w1"), g, Tensor::glorot(&[d, d], rng)),
                b1: p.add(format!("head{i}.b1"), g, Tensor::zeros(&[d])),
                w2: p.add(format!("head{i}.w2"), g, Tensor::glorot(&[d, 1], rng)),
                b2: p.add(format!("head{i}.b2"), g, Tensor::zeros(&[1])),
                bn: (
                    p.add(format!("head{i}.bn.gamma"), g, Tensor::ones(&[d])),
                    p.add(format!("head{i}.bn.beta"), g, Tensor::zeros(&[d])),
                ),
                site,
            });
        }
        let bn = bn_names.iter().map(|_| BatchNormStats::new(d)).collect();
        Ok(Self {
            config,
            layer,
            params: p,
            bn,
            bn_names,
            ids: Ids {
                input_w,
                input_b,
                embedding,
                interaction,
                layers,
                att_w,
                att_b,
                att_v,
                heads,
            },
            predefined,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layer_config(&self) -> &LayerConfig {
        &self.layer
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn batch_norm_stats(&self) -> &[BatchNormStats<T>] {
        &self.bn
    }

    pub fn batch_norm_stats_mut(&mut self) -> &mut [BatchNormStats<T>] {
        &mut self.bn
    }

    pub fn batch_norm_names(&self) -> &[String] {
        &self.bn_names
    }

    pub fn predefined(&self) -> &PredefinedStjg<T> {
        &self.predefined
    }

    /// Full forward pass. `vars` must come from binding [`Self::params`].
    pub fn forward(
        &mut self,
        tape: &mut Tape<T>,
        vars: &Bound,
        calendar: &Calendar,
        batch: &Batch<T>,
        training: bool,
    ) -> Result<Forward> {
        let cfg = &self.config;
        let shape = batch.inputs.shape();
        let expect = [shape[0], cfg.input_len, cfg.nodes, cfg.channels];
        if shape != expect {
            return Err(Error::shape("Stjgcn::forward", shape, &expect));
        }
        let (b, p, n, d) = (shape[0], cfg.input_len, cfg.nodes, cfg.hidden);
        if batch.times.len() != b * p {
            return Err(Error::invalid(
                "Stjgcn::forward",
                format!("{} time indices for {b} windows of {p} steps", batch.times.len()),
            ));
        }
        let ids = &self.ids;

        let x = tape.constant(batch.inputs.clone());
        let h = tape.matmul(x, vars[ids.input_w])?;
        let h = tape.add(h, vars[ids.input_b])?;
        let mut below: HashMap<usize, Var> = HashMap::new();
        let positions = self.layer.positions();
        let spacing = self.layer.tap_spacing();
        let k = cfg.kernel;
        for t in 0..p {
            let s = tape.narrow(h, 1, t, 1)?;
            below.insert(t, tape.reshape(s, &[b, n, d])?);
        }

        let zero_x = tape.constant(Tensor::zeros(&[b, n, d]));
        let zero_adj = tape.constant(Tensor::zeros(&[b, n, n]));
        let mut emb_cache: HashMap<usize, Var> = HashMap::new();
        let mut adj_cache: HashMap<(usize, usize), Var> = HashMap::new();
        let mut hidden = Vec::with_capacity(positions.len());

        for (m, pos) in positions.iter().enumerate() {
            let lid = &ids.layers[m];
            let o = spacing[m];
            let rows = pos.len() * b;
            let pdf_pairs = predefined_pairs(tape, &self.predefined, o, k)?;
            let mut window = Vec::with_capacity(k);
            let mut pdf_adj = Vec::with_capacity(k);
            let mut adt_adj = Vec::with_capacity(k);
            for j in 0..k {
                let mut xs = Vec::with_capacity(pos.len());
                let mut into_now = Vec::with_capacity(pos.len());
                let mut from_now = Vec::with_capacity(pos.len());
                for &t in pos {
                    match t.checked_sub(j * o) {
                        Some(src) => {
                            xs.push(below[&src]);
                            for (a, c, dst) in [(src, t, &mut into_now), (t, src, &mut from_now)] {
                                let l = match adj_cache.get(&(a, c)) {
                                    Some(&l) => l,
                                    None => {
                                        let ua = embedding_at(
                                            tape, vars, ids, calendar, batch, &mut emb_cache, a,
                                        )?;
                                        let uc = embedding_at(
                                            tape, vars, ids, calendar, batch, &mut emb_cache, c,
                                        )?;
                                        let l = build_adaptive(
                                            tape,
                                            ua,
                                            uc,
                                            vars[ids.interaction],
                                            cfg.delta_adt,
                                        )?;
                                        adj_cache.insert((a, c), l);
                                        l
                                    }
                                };
                                dst.push(l);
                            }
                        }
                        None => {
                            xs.push(zero_x);
                            into_now.push(zero_adj);
                            from_now.push(zero_adj);
                        }
                    }
                }
                window.push(cat0(tape, &xs)?);
                pdf_adj.push(pdf_pairs[j]);
                adt_adj.push((cat0(tape, &into_now)?, cat0(tape, &from_now)?));
            }
            debug_assert_eq!(tape.shape(window[0])[0], rows);

            let z_pdf = {
                let w = branch_weights(vars, &lid.pdf);
                let mut phis = branch_phis(vars, &lid.pdf, &mut self.bn, training);
                joint_graph_conv(tape, &window, &pdf_adj, &w, &mut phis)?
            };
            let z_adt = {
                let w = branch_weights(vars, &lid.adt);
                let mut phis = branch_phis(vars, &lid.adt, &mut self.bn, training);
                joint_graph_conv(tape, &window, &adt_adj, &w, &mut phis)?
            };
            let fused = gate_fuse(tape, z_pdf, z_adt, vars[lid.gate_w], vars[lid.gate_b])?;
            // residual: the layer input at the same position is tap 0
            let out = tape.add(fused, window[0])?;
            let mut level = Vec::with_capacity(pos.len());
            let mut next = HashMap::new();
            for (i, &t) in pos.iter().enumerate() {
                let v = tape.narrow(out, 0, i * b, b)?;
                level.push((t, v));
                next.insert(t, v);
            }
            hidden.push(level);
            below = next;
        }

        let ranges: Vec<Var> = hidden
            .iter()
            .map(|level| level.iter().find(|(t, _)| *t == p - 1).unwrap().1)
            .collect();
        let (y, attention) =
            multi_range_attention(tape, &ranges, vars[ids.att_w], vars[ids.att_b], vars[ids.att_v])?;
        let heads: Vec<HeadWeights> = ids
            .heads
            .iter()
            .map(|h| HeadWeights {
                w1: vars[h.w1],
                b1: vars[h.b1],
                w2: vars[h.w2],
                b2: vars[h.b2],
            })
            .collect();
        let mut phis = head_phis(vars, &ids.heads, &mut self.bn, training);
        let prediction = predict_heads(tape, y, &heads, &mut phis)?;
        Ok(Forward {
            prediction,
            hidden,
            ranges,
            attention,
        })
    }

    /// Inference-mode prediction `[B, Q, N]` in normalized units.
    pub fn predict(&mut self, calendar: &Calendar, batch: &Batch<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let vars = self.params.bind_frozen(&mut tape);
        let out = self.forward(&mut tape, &vars, calendar, batch, false)?;
        Ok(tape.value(out.prediction).clone())
    }
}

fn cat0<T: Scalar>(tape: &mut Tape<T>, parts: &[Var]) -> Result<Var> {
    if parts.len() == 1 {
        Ok(parts[0])
    } else {
        tape.concat(parts, 0)
    }
}

#[allow(clippy::too_many_arguments)]
fn embedding_at<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &Bound,
    ids: &Ids,
    calendar: &Calendar,
    batch: &Batch<T>,
    cache: &mut HashMap<usize, Var>,
    pos: usize,
) -> Result<Var> {
    if let Some(&u) = cache.get(&pos) {
        return Ok(u);
    }
    let p = batch.times.len() / batch.size();
    let times: Vec<usize> = (0..batch.size()).map(|b| batch.times[b * p + pos]).collect();
    let u = embed(tape, vars, &ids.embedding, calendar, &times)?;
    cache.insert(pos, u);
    Ok(u)
}

fn branch_weights(vars: &Bound, ids: &BranchIds) -> BranchWeights {
    BranchWeights {
        first: ids.first.iter().map(|&i| vars[i]).collect(),
        second: ids.second.iter().map(|&i| vars[i]).collect(),
        bias: vars[ids.bias],
    }
}

fn branch_phis<'a, T: Scalar>(
    vars: &Bound,
    ids: &BranchIds,
    bn: &'a mut [BatchNormStats<T>],
    training: bool,
) -> Vec<Phi<'a, T>> {
    let k = ids.bn.len();
    bn[ids.site..ids.site + k]
        .iter_mut()
        .zip(&ids.bn)
        .map(|(stats, &(g, b))| Phi {
            gamma: vars[g],
            beta: vars[b],
            stats,
            training,
        })
        .collect()
}

fn head_phis<'a, T: Scalar>(
    vars: &Bound,
    heads: &[HeadIds],
    bn: &'a mut [BatchNormStats<T>],
    training: bool,
) -> Vec<Phi<'a, T>> {
    let first = heads[0].site;
    bn[first..first + heads.len()]
        .iter_mut()
        .zip(heads)
        .map(|(stats, h)| Phi {
            gamma: vars[h.bn.0],
            beta: vars[h.bn.1],
            stats,
            training,
        })
        .collect()
}
