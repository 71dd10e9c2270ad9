//! Command implementations behind the `stjgcn` binary.
//!
//! Argument parsing lives in the binary; this module takes already parsed
//! [`Options`] and a [`Command`] and writes results to the given streams, so
//! every command can also be driven from tests and examples.

pub mod bundle;
pub mod table;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub use bundle::Bundle;
pub use table::{Format, Table};

use crate::autodiff::{Tape, Var};
use crate::data::config::parse_config_text;
use crate::data::distances::distances_to_csv;
use crate::data::{
    generate_synthetic, load_distances, parse_config, Calendar, Precision, RunConfig, SynthConfig,
    TrafficDataset,
};
use crate::error::{make_dir, read_text, write_file, Error, Result};
use crate::gradcheck::{self, GradcheckReport};
use crate::graph::{build_predefined, DistanceGraph, Edge};
use crate::model::{cost_terms, count_parameters, plan_dilations, Batch, ModelConfig, Stjgcn};
use crate::params::Bound;
use crate::tensor::{Scalar, Tensor};
use crate::train::{self, evaluate, evaluate_persistence, history_csv, Prepared, MAPE_MASK};

/// Settings shared by every command.
#[derive(Clone, Debug, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    /// `key = value` overrides in command-line order.
    pub overrides: Vec<(String, String)>,
    pub format: Format,
}

impl Options {
    pub fn run_config(&self) -> Result<RunConfig> {
        parse_config(self.config.as_deref(), &self.overrides)
    }

    /// Keys set by the config file or an override rather than defaulted.
    pub fn explicit_keys(&self) -> Result<BTreeSet<String>> {
        let mut keys: BTreeSet<String> = self.overrides.iter().map(|(k, _)| k.clone()).collect();
        if let Some(path) = &self.config {
            for (k, _) in parse_config_text(&read_text(path)?, path)? {
                keys.insert(k);
            }
        }
        Ok(keys)
    }
}

/// Dataset split selector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    #[default]
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::config("split", format!("expected train, val or test, got `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    /// Dump thresholded kernel adjacency for gaps `0..k`.
    BuildGraph { nodes: Option<usize> },
    Train,
    Evaluate {
        checkpoint: PathBuf,
        split: Split,
        dump_windows: Option<PathBuf>,
    },
    /// Forecast the `Q` steps following step `at` (default: the end of the
    /// data).
    Predict { checkpoint: PathBuf, at: Option<usize> },
    Gradcheck { nodes: usize },
    Params {
        nodes: usize,
        channels: usize,
        edges: usize,
    },
    Synth {
        nodes: usize,
        steps: usize,
        interval: u32,
        noise: f64,
    },
}

/// Outcome of a command that ran to completion.
#[derive(Clone, Debug, PartialEq)]
pub enum Status {
    Success,
    /// Completed, but a check failed.
    Failed(String),
}

/// Process exit code for an error: 1 for configuration and usage problems,
/// 2 for failures while running.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => 1,
        _ => 2,
    }
}

pub const CHECKPOINT_FILE: &str = "model.stjgcn";
pub const HISTORY_FILE: &str = "history.csv";
pub const CONFIG_FILE: &str = "config.txt";

/// Run one command. Results go to `out`; progress goes to `log`.
pub fn execute(cmd: &Command, opts: &Options, out: &mut dyn Write, log: &mut dyn Write) -> Result<Status> {
    let run = opts.run_config()?;
    match cmd {
        Command::BuildGraph { nodes } => build_graph(&run, *nodes, opts.format, out),
        Command::Train => match run.precision {
            Precision::F32 => train_cmd::<f32>(&run, opts.format, out, log),
            Precision::F64 => train_cmd::<f64>(&run, opts.format, out, log),
        },
        Command::Evaluate {
            checkpoint,
            split,
            dump_windows,
        } => match checkpoint_precision(checkpoint, opts)? {
            Precision::F32 => evaluate_cmd::<f32>(&run, checkpoint, *split, dump_windows.as_deref(), opts.format, out, log),
            Precision::F64 => evaluate_cmd::<f64>(&run, checkpoint, *split, dump_windows.as_deref(), opts.format, out, log),
        },
        Command::Predict { checkpoint, at } => match checkpoint_precision(checkpoint, opts)? {
            Precision::F32 => predict_cmd::<f32>(&run, checkpoint, *at, opts.format, out),
            Precision::F64 => predict_cmd::<f64>(&run, checkpoint, *at, opts.format, out),
        },
        Command::Gradcheck { nodes } => gradcheck_cmd(&run, &opts.explicit_keys()?, *nodes, opts.format, out),
        Command::Params { nodes, channels, edges } => params_cmd(&run, *nodes, *channels, *edges, opts.format, out),
        Command::Synth {
            nodes,
            steps,
            interval,
            noise,
        } => synth_cmd(&run, *nodes, *steps, *interval, *noise, opts.format, out),
    }
}

/// Precision for commands that load a checkpoint: an explicit `precision`
/// override wins, otherwise the stored element type is used.
fn checkpoint_precision(path: &Path, opts: &Options) -> Result<Precision> {
    if opts.explicit_keys()?.contains("precision") {
        return Ok(opts.run_config()?.precision);
    }
    let ckpt = crate::model::Checkpoint::load(path)?;
    match bundle::checkpoint_precision(&ckpt).as_deref() {
        Some("f32") => Ok(Precision::F32),
        _ => Ok(Precision::F64),
    }
}

fn required<'a>(value: &'a Option<PathBuf>, key: &str, what: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::config(key, format!("{what} is required (--{key})")))
}

/// Dataset and its distance graph from the configured paths.
pub fn load_inputs(run: &RunConfig) -> Result<(TrafficDataset, DistanceGraph)> {
    let ds = TrafficDataset::load(required(&run.data, "data", "a dataset path")?)?;
    let graph = load_distances(
        required(&run.distances, "distances", "a distance file")?,
        ds.nodes(),
        ds.node_ids(),
    )?;
    Ok((ds, graph))
}

/// Largest node index mentioned in a `from,to,cost` file, plus one.
fn infer_nodes(text: &str) -> usize {
    text.lines()
        .skip(1)
        .flat_map(|l| l.split(',').take(2).map(|s| s.trim().parse::<usize>().ok()).collect::<Vec<_>>())
        .flatten()
        .max()
        .map_or(0, |m| m + 1)
}

fn build_graph(run: &RunConfig, nodes: Option<usize>, format: Format, out: &mut dyn Write) -> Result<Status> {
    let path = required(&run.distances, "distances", "a distance file")?;
    let (graph, ids) = match &run.data {
        Some(data) => {
            let ds = TrafficDataset::load(data)?;
            let ids = ds.node_ids().map(<[i64]>::to_vec);
            (load_distances(path, ds.nodes(), ids.as_deref())?, ids)
        }
        None => {
            let n = match nodes {
                Some(n) => n,
                None => infer_nodes(&read_text(path)?),
            };
            (load_distances(path, n, None)?, None)
        }
    };
    let graph = match run.sigma {
        Some(s) => graph.with_sigma(s)?,
        None => graph,
    };
    let stjg = build_predefined::<f64>(&graph, run.k, run.delta_pdf)?;
    let n = graph.node_count();
    let id = |i: usize| ids.as_ref().map_or(i as i64, |ids| ids[i]);

    let mut adjacency = Table::new(&["gap", "from", "to", "weight", "forward", "backward"]);
    for k in 0..run.k {
        let (raw, fwd, bwd) = (&stjg.raw[k], &stjg.forward[k], &stjg.backward[k]);
        for i in 0..n {
            for j in 0..n {
                let w = raw.at(&[i, j]);
                if w != 0.0 {
                    adjacency.push(vec![
                        json!(k),
                        json!(id(i)),
                        json!(id(j)),
                        json!(w),
                        json!(fwd.at(&[i, j])),
                        json!(bwd.at(&[i, j])),
                    ]);
                }
            }
        }
    }
    let mut stats = Table::new(&["gap", "edges", "sparsity", "sigma", "threshold"]);
    for (k, edges) in stjg.edge_counts().into_iter().enumerate() {
        stats.push(vec![
            json!(k),
            json!(edges),
            json!(1.0 - edges as f64 / (n * n) as f64),
            json!(graph.sigma()),
            json!(run.delta_pdf),
        ]);
    }
    match &run.out {
        Some(file) => write_file(file, adjacency.render(Format::Csv))?,
        None => adjacency.write(format, out)?,
    }
    stats.write(format, out)?;
    Ok(Status::Success)
}

fn metric_row(split: &str, m: &train::Metrics) -> Vec<serde_json::Value> {
    vec![json!(split), json!(m.mae), json!(m.rmse), json!(m.mape)]
}

fn warn_unmasked(log: &mut dyn Write, split: &str, truth: &[f64]) -> Result<()> {
    if !truth.is_empty() && train::mape_count(truth) == 0 {
        writeln!(log, "warning: every {split} target is below {MAPE_MASK} in magnitude; MAPE terms are 0")?;
    }
    Ok(())
}

fn train_cmd<T: Scalar>(run: &RunConfig, format: Format, out: &mut dyn Write, log: &mut dyn Write) -> Result<Status> {
    let dir = required(&run.out, "out", "an output directory")?.to_path_buf();
    let (ds, graph) = load_inputs(run)?;
    let data = Prepared::<T>::new(&ds, run.p, run.q, &run.split_spec(), run.target_channel)?;
    let mut model: Stjgcn<T> = run.build_model(&ds, &graph)?;
    let graph = match run.sigma {
        Some(s) => graph.with_sigma(s)?,
        None => graph,
    };
    make_dir(&dir)?;
    write_file(&dir.join(CONFIG_FILE), run.to_text())?;
    writeln!(
        log,
        "training {} parameters on {} windows ({} validation), dilations {:?}",
        model.params().scalar_count(),
        data.splits().train.len(),
        data.splits().val.len(),
        model.config().dilations
    )?;
    for (name, starts) in [("training", &data.splits().train), ("validation", &data.splits().val)] {
        warn_unmasked(log, name, &data.truth(starts))?;
    }
    let report = train::train(&mut model, &data, &run.train_config(), |r| {
        let _ = writeln!(
            log,
            "epoch {:>4}  train {:.4}  val {:.4}  mae {:.4}  rmse {:.4}  mape {:.2}",
            r.epoch, r.train_loss, r.val_loss, r.val_mae, r.val_rmse, r.val_mape
        );
    })?;
    write_file(&dir.join(HISTORY_FILE), history_csv(&report.history))?;
    let bundle = Bundle {
        run: run.clone(),
        model,
        zscore: data.zscore().clone(),
        graph,
        best_epoch: report.best_epoch,
    };
    bundle.save(&dir.join(CHECKPOINT_FILE))?;
    let mut model = bundle.model;

    let mut table = Table::new(&["split", "mae", "rmse", "mape"]);
    if let Some(best) = report.best_epoch {
        let r = &report.history[best - 1];
        let val = train::Metrics {
            mae: r.val_mae,
            rmse: r.val_rmse,
            mape: r.val_mape,
        };
        table.push(metric_row("val", &val));
        let test = data.splits().test.clone();
        let e = evaluate(&mut model, &data, &test, run.batch_size)?;
        table.push(metric_row("test", &e.overall));
        table.push(metric_row("test-persistence", &evaluate_persistence(&data, &test).overall));
        writeln!(log, "best epoch {best}; wrote {}", dir.display())?;
    } else {
        writeln!(log, "no epochs run; wrote initial parameters to {}", dir.display())?;
    }
    table.write(format, out)?;
    Ok(Status::Success)
}

fn check_dims<T: Scalar>(model: &Stjgcn<T>, ds: &TrafficDataset) -> Result<()> {
    let c = model.config();
    if (c.nodes, c.channels) != (ds.nodes(), ds.channels()) {
        return Err(Error::Data(format!(
            "dimension mismatch: checkpoint expects [nodes={}, channels={}], dataset has [nodes={}, channels={}]",
            c.nodes,
            c.channels,
            ds.nodes(),
            ds.channels()
        )));
    }
    Ok(())
}

fn evaluate_cmd<T: Scalar>(
    run: &RunConfig,
    checkpoint: &Path,
    split: Split,
    dump: Option<&Path>,
    format: Format,
    out: &mut dyn Write,
    log: &mut dyn Write,
) -> Result<Status> {
    let bundle = Bundle::<T>::load(checkpoint)?;
    // default to the dataset the model was trained on
    let data_path = run.data.clone().or_else(|| bundle.run.data.clone());
    let ds = TrafficDataset::load(required(&data_path, "data", "a dataset path")?)?;
    let mut model = bundle.model;
    check_dims(&model, &ds)?;
    let saved = &bundle.run;
    let data = Prepared::<T>::with_zscore(
        &ds,
        saved.p,
        saved.q,
        &saved.split_spec(),
        saved.target_channel,
        bundle.zscore,
    )?;
    let starts = match split {
        Split::Train => data.splits().train.clone(),
        Split::Val => data.splits().val.clone(),
        Split::Test => data.splits().test.clone(),
    };
    let e = evaluate(&mut model, &data, &starts, run.batch_size)?;
    warn_unmasked(log, "evaluated", &e.truth)?;
    let mut table = Table::new(&["horizon", "mae", "rmse", "mape"]);
    table.push(vec![json!("all"), json!(e.overall.mae), json!(e.overall.rmse), json!(e.overall.mape)]);
    for (i, m) in e.horizons.iter().enumerate() {
        table.push(vec![json!(i + 1), json!(m.mae), json!(m.rmse), json!(m.mape)]);
    }
    table.write(format, out)?;

    if let Some(path) = dump {
        let (q, n) = (data.horizon(), data.nodes());
        let cal = data.calendar();
        let mut windows = Table::new(&["window", "start", "horizon", "timestamp", "node", "prediction", "truth"]);
        for (w, &s) in starts.iter().enumerate() {
            for i in 0..q {
                let step = s + data.input_len() + i;
                for j in 0..n {
                    let at = (w * q + i) * n + j;
                    windows.push(vec![
                        json!(w),
                        json!(s),
                        json!(i + 1),
                        json!(cal.timestamp(step).format("%Y-%m-%dT%H:%M:%S").to_string()),
                        json!(ds.node_id(j)),
                        json!(e.predictions[at]),
                        json!(e.truth[at]),
                    ]);
                }
            }
        }
        write_file(path, windows.render(Format::Csv))?;
    }
    Ok(Status::Success)
}

fn predict_cmd<T: Scalar>(
    run: &RunConfig,
    checkpoint: &Path,
    at: Option<usize>,
    format: Format,
    out: &mut dyn Write,
) -> Result<Status> {
    let bundle = Bundle::<T>::load(checkpoint)?;
    // default to the dataset the model was trained on
    let data_path = run.data.clone().or_else(|| bundle.run.data.clone());
    let ds = TrafficDataset::load(required(&data_path, "data", "a dataset path")?)?;
    let mut model = bundle.model;
    check_dims(&model, &ds)?;
    let (p, q, n, c) = (bundle.run.p, bundle.run.q, ds.nodes(), ds.channels());
    let at = at.unwrap_or(ds.steps());
    if at < p || at > ds.steps() {
        return Err(Error::Data(format!(
            "forecast origin {at} needs {p} observed steps before it within 0..={}",
            ds.steps()
        )));
    }
    let window = &ds.values()[(at - p) * n * c..at * n * c];
    let inputs = Tensor::from_f64(&[1, p, n, c], &bundle.zscore.apply(window))?;
    let batch = Batch {
        inputs,
        times: (at - p..at).collect(),
    };
    let cal = ds.calendar();
    let pred = model.predict(&cal, &batch)?.to_f64_vec();
    let tc = bundle.run.target_channel;
    let (mean, std) = (bundle.zscore.mean[tc], bundle.zscore.std[tc]);
    let mut table = Table::new(&["horizon", "timestamp", "node", "value"]);
    for i in 0..q {
        let when = cal.timestamp(at + i).format("%Y-%m-%dT%H:%M:%S").to_string();
        for j in 0..n {
            table.push(vec![json!(i + 1), json!(when), json!(ds.node_id(j)), json!(pred[i * n + j] * std + mean)]);
        }
    }
    table.write(format, out)?;
    Ok(Status::Success)
}

/// Limits of the gradient-check model.
pub const GRADCHECK_MAX_NODES: usize = 5;
pub const GRADCHECK_MAX_HIDDEN: usize = 8;
pub const GRADCHECK_MAX_INPUT: usize = 8;

/// Ring of `n` nodes with uneven distances.
fn ring_graph(n: usize) -> Result<DistanceGraph> {
    if n == 1 {
        return DistanceGraph::new(1, vec![Edge { from: 0, to: 0, distance: 0.0 }])?.with_sigma(1.0);
    }
    let mut edges = Vec::new();
    for i in 0..n {
        let j = (i + 1) % n;
        edges.push(Edge { from: i, to: j, distance: 1.0 + 0.25 * i as f64 });
        if n > 2 {
            edges.push(Edge { from: j, to: i, distance: 1.5 + 0.1 * i as f64 });
        }
    }
    DistanceGraph::new(n, edges)
}

/// Finite-difference check of every parameter group of a small model with
/// a squared-error loss on random inputs. Differences are always taken in
/// f64 on the same parameters and inputs.
pub fn gradcheck_model<T: Scalar>(cfg: &ModelConfig, seed: u64, step: f64, threshold: f64) -> Result<GradcheckReport> {
    let ring = ring_graph(cfg.nodes)?;
    let gaps = cfg.required_gaps()?;
    let mut net = Stjgcn::<T>::new(cfg.clone(), build_predefined(&ring, gaps, 0.1)?, seed)?;
    let mut reference = Stjgcn::<f64>::new(cfg.clone(), build_predefined(&ring, gaps, 0.1)?, seed)?;
    reference.params_mut().set_values(net.params().values().iter().map(|t| t.cast()).collect());
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let b = 2;
    let start = chrono::NaiveDate::from_ymd_opt(2018, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let minutes = (24 * 60 / cfg.slots_per_day) as u32;
    let cal = Calendar::new(start, minutes, 64 * cfg.input_len)?;
    let batch = Batch {
        inputs: Tensor::<T>::uniform(&[b, cfg.input_len, cfg.nodes, cfg.channels], -1.0, 1.0, &mut rng),
        times: (0..b).flat_map(|w| (0..cfg.input_len).map(move |t| 29 * w + 3 + t)).collect(),
    };
    let batch64 = Batch {
        inputs: batch.inputs.cast::<f64>(),
        times: batch.times.clone(),
    };
    let target = Tensor::<T>::uniform(&[b, cfg.horizon, cfg.nodes], -1.0, 1.0, &mut rng);
    let target64 = target.cast::<f64>();
    let params: Vec<(String, Tensor<T>)> =
        net.params().entries().iter().map(|e| (e.group.clone(), e.value.clone())).collect();
    gradcheck::check_with_reference(
        &params,
        |tape: &mut Tape<T>, vars: &[Var]| {
            let f = net.forward(tape, &Bound::from_vars(vars.to_vec()), &cal, &batch, true)?;
            squared_error(tape, f.prediction, &target)
        },
        |tape: &mut Tape<f64>, vars: &[Var]| {
            let f = reference.forward(tape, &Bound::from_vars(vars.to_vec()), &cal, &batch64, true)?;
            squared_error(tape, f.prediction, &target64)
        },
        step,
        6,
        threshold,
    )
}

fn squared_error<T: Scalar>(tape: &mut Tape<T>, pred: Var, target: &Tensor<T>) -> Result<Var> {
    let t = tape.constant(target.clone());
    let e = tape.sub(pred, t)?;
    let sq = tape.mul(e, e)?;
    tape.mean(sq)
}

/// Default threshold and difference step per precision.
pub fn gradcheck_tolerance(precision: Precision) -> (f64, f64) {
    match precision {
        Precision::F64 => (1e-4, 1e-5),
        Precision::F32 => (1e-2, 1e-5),
    }
}

fn gradcheck_cmd(
    run: &RunConfig,
    explicit: &BTreeSet<String>,
    nodes: usize,
    format: Format,
    out: &mut dyn Write,
) -> Result<Status> {
    let pick = |key: &str, set: usize, tiny: usize| if explicit.contains(key) { set } else { tiny };
    let p = pick("p", run.p, 8);
    let d = pick("d", run.d, 8);
    let k = pick("k", run.k, 2);
    let q = pick("q", run.q, 2);
    for (key, v, max) in [
        ("nodes", nodes, GRADCHECK_MAX_NODES),
        ("d", d, GRADCHECK_MAX_HIDDEN),
        ("p", p, GRADCHECK_MAX_INPUT),
    ] {
        if v == 0 || v > max {
            return Err(Error::config(key, format!("gradcheck needs 1..={max}, got {v}")));
        }
    }
    let dilations = match &run.dilations {
        Some(d) if explicit.contains("dilations") => d.clone(),
        _ => plan_dilations(p, k)?.dilations,
    };
    let cfg = ModelConfig {
        nodes,
        channels: 1,
        hidden: d,
        input_len: p,
        horizon: q,
        kernel: k,
        dilations,
        // every adaptive entry kept, so the loss is smooth in the embeddings
        delta_adt: if explicit.contains("delta_adt") { run.delta_adt } else { -10.0 },
        slots_per_day: 288,
    };
    cfg.validate()?;
    let (threshold, step) = gradcheck_tolerance(run.precision);
    let report = match run.precision {
        Precision::F64 => gradcheck_model::<f64>(&cfg, run.seed, step, threshold)?,
        Precision::F32 => gradcheck_model::<f32>(&cfg, run.seed, step, threshold)?,
    };
    let mut table = Table::new(&["group", "max_rel_error", "checked", "threshold", "status"]);
    for g in &report.groups {
        let ok = g.max_rel_error < threshold;
        table.push(vec![
            json!(g.name),
            json!(g.max_rel_error),
            json!(g.checked),
            json!(threshold),
            json!(if ok { "pass" } else { "FAIL" }),
        ]);
    }
    table.write(format, out)?;
    if report.passed() {
        Ok(Status::Success)
    } else {
        let names: Vec<&str> = report.failures().map(|g| g.name.as_str()).collect();
        Ok(Status::Failed(format!(
            "gradient check failed at {} precision for: {}",
            run.precision,
            names.join(", ")
        )))
    }
}

fn params_cmd(
    run: &RunConfig,
    nodes: usize,
    channels: usize,
    edges: usize,
    format: Format,
    out: &mut dyn Write,
) -> Result<Status> {
    let (nodes, channels, slots, graph) = match (&run.data, &run.distances) {
        (Some(_), Some(_)) => {
            let (ds, g) = load_inputs(run)?;
            (ds.nodes(), ds.channels(), ds.calendar().slots_per_day(), g)
        }
        _ => (nodes, channels, 288, ring_graph(nodes)?),
    };
    let edges = if run.distances.is_some() { graph.edges().len() } else { edges };
    let layer = run.layer_config()?;
    let cfg = ModelConfig {
        nodes,
        channels,
        hidden: run.d,
        input_len: run.p,
        horizon: run.q,
        kernel: run.k,
        dilations: layer.dilations.clone(),
        delta_adt: run.delta_adt,
        slots_per_day: slots,
    };
    let stjg = build_predefined::<f64>(&graph, cfg.required_gaps()?, 0.0)?;
    let net = Stjgcn::<f64>::new(cfg, stjg, run.seed)?;
    let count = count_parameters(net.params());
    let mut table = Table::new(&["item", "formula", "value"]);
    for g in &count.groups {
        table.push(vec![json!(format!("params:{}", g.group)), json!(""), json!(g.count)]);
    }
    table.push(vec![json!("params:total"), json!(""), json!(count.total)]);
    for c in cost_terms(nodes, edges, run.d, run.k, layer.layers(), run.q) {
        table.push(vec![json!(format!("cost:{}", c.module)), json!(c.formula), json!(c.value)]);
    }
    table.write(format, out)?;
    Ok(Status::Success)
}

pub const SYNTH_DATA_FILE: &str = "data.csv";
pub const SYNTH_DISTANCE_FILE: &str = "distances.csv";

fn synth_cmd(
    run: &RunConfig,
    nodes: usize,
    steps: usize,
    interval: u32,
    noise: f64,
    format: Format,
    out: &mut dyn Write,
) -> Result<Status> {
    let dir = required(&run.out, "out", "an output directory")?;
    let cfg = SynthConfig {
        noise,
        ..SynthConfig::new(nodes, steps, interval, run.seed)
    };
    let (ds, graph) = generate_synthetic(&cfg)?;
    make_dir(dir)?;
    let data_path = dir.join(SYNTH_DATA_FILE);
    let dist_path = dir.join(SYNTH_DISTANCE_FILE);
    ds.save(&data_path)?;
    write_file(&dist_path, distances_to_csv(&graph, None))?;
    let mut table = Table::new(&["file", "rows", "nodes", "edges"]);
    table.push(vec![json!(data_path.display().to_string()), json!(steps), json!(nodes), json!("")]);
    table.push(vec![json!(dist_path.display().to_string()), json!(graph.edges().len()), json!(nodes), json!(graph.edges().len())]);
    table.write(format, out)?;
    Ok(Status::Success)
}
