//! One line per acceptance criterion, then a single assertion over all of
//! them. Runs sequentially so the timings are not shared with other tests.

use std::fs;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stjgcn::cli::{self, gradcheck_model, Bundle, Command, Format, Options, CHECKPOINT_FILE, HISTORY_FILE};
use stjgcn::data::{generate_synthetic, Calendar, Precision, RunConfig, SynthConfig, TrafficDataset};
use stjgcn::graph::{build_adaptive, build_predefined, DistanceGraph, Edge};
use stjgcn::model::{count_parameters, plan_dilations, Batch, ModelConfig, Stjgcn};
use stjgcn::oracle;
use stjgcn::train::{combined_loss, evaluate, evaluate_persistence, train, Prepared};
use stjgcn::{Tape, Tensor};

#[derive(Default)]
struct Report {
    failed: Vec<String>,
}

impl Report {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(name.to_string());
        }
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn ring(n: usize) -> DistanceGraph {
    let edges = (0..n)
        .flat_map(|i| {
            let j = (i + 1) % n;
            [
                Edge { from: i, to: j, distance: 1.0 + 0.2 * i as f64 },
                Edge { from: j, to: i, distance: 1.4 },
            ]
        })
        .collect();
    DistanceGraph::new(n, edges).unwrap()
}

fn calendar(len: usize) -> Calendar {
    let start = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    Calendar::new(start, 5, len).unwrap()
}

fn gradient_suite(r: &mut Report) {
    let clock = Instant::now();
    let cfg = ModelConfig {
        nodes: 4,
        channels: 1,
        hidden: 8,
        input_len: 8,
        horizon: 2,
        kernel: 2,
        dilations: plan_dilations(8, 2).unwrap().dilations,
        delta_adt: -10.0,
        slots_per_day: 288,
    };
    let report = gradcheck_model::<f64>(&cfg, 0, 1e-5, 1e-4).unwrap();
    let elapsed = clock.elapsed();
    let groups: Vec<&str> = report.groups.iter().map(|g| g.name.as_str()).collect();
    let covers = ["input", "embedding", "interaction", "attention", "heads"]
        .iter()
        .all(|g| groups.contains(g))
        && (0..cfg.dilations.len()).all(|m| {
            ["predefined", "adaptive", "gate"].iter().all(|b| groups.contains(&format!("layer{m}.{b}").as_str()))
        });
    r.check(
        "gradient suite",
        report.passed() && covers && elapsed < Duration::from_secs(60),
        format!(
            "{} groups, worst relative error {:.2e} < 1e-4, {} < 60s",
            report.groups.len(),
            report.worst(),
            secs(elapsed)
        ),
    );
}

fn oracle_equivalence(r: &mut Report) {
    let clock = Instant::now();
    let cases = 1000u64;
    let worst = |f: &dyn Fn(u64) -> f64| (0..cases).map(f).fold(0.0f64, f64::max);
    let predefined = worst(&oracle::check_predefined_case);
    let adaptive = worst(&oracle::check_adaptive_case);
    let attention = worst(&|s| oracle::check_attention_case(s).0);
    let evaluate = worst(&oracle::check_evaluate_case);
    let matmul = worst(&oracle::check_matmul_case);
    let elapsed = clock.elapsed();
    let pass = predefined < 1e-10
        && adaptive < 1e-10
        && attention < 1e-10
        && evaluate < 1e-12
        && matmul < 1e-12
        && elapsed < Duration::from_secs(30);
    r.check(
        "oracle equivalence",
        pass,
        format!(
            "{cases} cases each; max deviation predefined {predefined:.1e}, adaptive {adaptive:.1e}, \
             attention {attention:.1e} (< 1e-10), evaluate {evaluate:.1e}, matmul {matmul:.1e} (< 1e-12); {} < 30s",
            secs(elapsed)
        ),
    );
}

fn normalization_invariants(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut row_dev = 0.0f64;
    let mut masked_nonzero = 0usize;
    let mut rows = 0usize;
    for _ in 0..500 {
        let n = rng.gen_range(1..=6);
        let d = rng.gen_range(1..=4);
        let mut tape = Tape::<f64>::new();
        let ua = tape.constant(Tensor::uniform(&[n, d], -2.0, 2.0, &mut rng));
        let ub = tape.constant(Tensor::uniform(&[n, d], -2.0, 2.0, &mut rng));
        let b = tape.constant(Tensor::uniform(&[d, d], -2.0, 2.0, &mut rng));
        let thr = rng.gen_range(-1.0..1.0);
        let a = build_adaptive(&mut tape, ua, ub, b, thr).unwrap();
        for row in tape.value(a).data().chunks(n) {
            let s: f64 = row.iter().sum();
            if s != 0.0 {
                rows += 1;
                row_dev = row_dev.max((s - 1.0).abs());
            } else {
                masked_nonzero += row.iter().filter(|v| **v != 0.0).count();
            }
        }
    }

    let mut att_dev = 0.0f64;
    for seed in 0..200 {
        att_dev = att_dev.max(oracle::check_attention_case(seed).1);
    }
    let cfg = ModelConfig {
        nodes: 4,
        channels: 1,
        hidden: 4,
        input_len: 12,
        horizon: 2,
        kernel: 2,
        dilations: vec![2, 4, 4, 4],
        delta_adt: 0.0,
        slots_per_day: 288,
    };
    let mut net = Stjgcn::<f64>::new(cfg.clone(), build_predefined(&ring(4), cfg.required_gaps().unwrap(), 0.1).unwrap(), 2)
        .unwrap();
    let batch = Batch {
        inputs: Tensor::uniform(&[3, 12, 4, 1], -1.0, 1.0, &mut rng),
        times: (0..3).flat_map(|w| (0..12).map(move |t| 50 * w + t)).collect(),
    };
    let mut tape = Tape::new();
    let vars = net.params().bind(&mut tape);
    let f = net.forward(&mut tape, &vars, &calendar(500), &batch, true).unwrap();
    let m = cfg.dilations.len();
    for w in tape.value(f.attention).data().chunks(m) {
        att_dev = att_dev.max((w.iter().sum::<f64>() - 1.0).abs());
    }

    let mut degenerate_diffs = 0usize;
    let mut entries = 0usize;
    for _ in 0..200 {
        let n = rng.gen_range(2..=6);
        let mut edges = Vec::new();
        for from in 0..n {
            for to in 0..n {
                if from != to && rng.gen_bool(0.5) {
                    edges.push(Edge { from, to, distance: rng.gen_range(0.05..4.0) });
                }
            }
        }
        edges.push(Edge { from: 0, to: 1, distance: 0.3 });
        edges.push(Edge { from: 1, to: 0, distance: 2.7 });
        edges.sort_by_key(|e| (e.from, e.to));
        edges.dedup_by_key(|e| (e.from, e.to));
        let g = DistanceGraph::new(n, edges).unwrap();
        let delta = rng.gen_range(0.0..1.0);
        let stjg = build_predefined::<f64>(&g, 3, delta).unwrap();
        let sigma = g.sigma();
        for (i, d) in g.dense().iter().enumerate() {
            let spatial = match d {
                Some(d) => {
                    let w = (-(d * d) / (sigma * sigma)).exp();
                    if w >= delta {
                        w
                    } else {
                        0.0
                    }
                }
                None => 0.0,
            };
            entries += 1;
            if stjg.raw[0].data()[i].to_bits() != spatial.to_bits() {
                degenerate_diffs += 1;
            }
        }
    }
    r.check(
        "normalization invariants",
        row_dev <= 1e-9 && masked_nonzero == 0 && att_dev <= 1e-9 && degenerate_diffs == 0,
        format!(
            "{rows} adaptive rows within {row_dev:.1e} of 1; attention sums within {att_dev:.1e} of 1; \
             gap-0 kernel equals the spatial kernel on {entries} entries ({degenerate_diffs} differ)"
        ),
    );
}

fn causality(r: &mut Report) {
    let cfg = ModelConfig {
        nodes: 3,
        channels: 2,
        hidden: 4,
        input_len: 12,
        horizon: 2,
        kernel: 2,
        dilations: vec![2, 4, 4, 4],
        delta_adt: 0.0,
        slots_per_day: 288,
    };
    let stjg = build_predefined(&ring(3), cfg.required_gaps().unwrap(), 0.1).unwrap();
    let mut net = Stjgcn::<f64>::new(cfg.clone(), stjg, 3).unwrap();
    let cal = calendar(500);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let base = Batch {
        inputs: Tensor::uniform(&[2, 12, 3, 2], -1.0, 1.0, &mut rng),
        times: (0..2).flat_map(|w| (0..12).map(move |t| 37 * w + 11 + t)).collect(),
    };
    {
        let mut tape = Tape::new();
        let vars = net.params().bind(&mut tape);
        net.forward(&mut tape, &vars, &cal, &base, true).unwrap();
    }
    let hidden = |net: &mut Stjgcn<f64>, b: &Batch<f64>| {
        let mut tape = Tape::new();
        let vars = net.params().bind_frozen(&mut tape);
        let f = net.forward(&mut tape, &vars, &cal, b, false).unwrap();
        f.hidden
            .iter()
            .map(|lvl| lvl.iter().map(|(t, v)| (*t, tape.value(*v).clone())).collect::<Vec<_>>())
            .collect::<Vec<_>>()
    };
    let reference = hidden(&mut net, &base);
    let mut violations = 0usize;
    let mut compared = 0usize;
    let mut inert = 0usize;
    for _ in 0..100 {
        let pos = rng.gen_range(0..12);
        let mut pert = base.clone();
        for w in 0..2 {
            for n in 0..3 {
                for c in 0..2 {
                    let v = pert.inputs.at(&[w, pos, n, c]);
                    pert.inputs.set(&[w, pos, n, c], v + rng.gen_range(0.5..2.0));
                }
            }
        }
        let got = hidden(&mut net, &pert);
        let mut changed = false;
        for (lr, lg) in reference.iter().zip(&got) {
            for ((t, a), (_, b)) in lr.iter().zip(lg) {
                if *t < pos {
                    compared += 1;
                    let same = a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
                    if !same {
                        violations += 1;
                    }
                } else if a != b {
                    changed = true;
                }
            }
        }
        if !changed {
            inert += 1;
        }
    }
    r.check(
        "causality",
        violations == 0 && inert == 0,
        format!(
            "100 trials, P=12, dilations [2, 4, 4, 4], K=2: {compared} earlier states compared, \
             {violations} not bit-identical, {inert} perturbations without effect"
        ),
    );
}

fn synthetic_convergence(r: &mut Report) {
    let clock = Instant::now();
    let (ds, graph) = generate_synthetic(&SynthConfig::new(10, 2016, 5, 1)).unwrap();
    let run = RunConfig {
        d: 16,
        epochs: 200,
        delta_adt: 0.0,
        precision: Precision::F32,
        seed: 1,
        ..RunConfig::default()
    };
    let data = Prepared::<f32>::new(&ds, run.p, run.q, &run.split_spec(), 0).unwrap();
    let mut model: Stjgcn<f32> = run.build_model(&ds, &graph).unwrap();
    let report = train(&mut model, &data, &run.train_config(), |_| {}).unwrap();
    let train_eval = evaluate(&mut model, &data, &data.splits().train.clone(), 256).unwrap();
    let test = data.splits().test.clone();
    let test_eval = evaluate(&mut model, &data, &test, 256).unwrap();
    let persistence = evaluate_persistence(&data, &test);
    let elapsed = clock.elapsed();

    let std = data.zscore().std[0];
    let train_ratio = train_eval.overall.mae / std;
    let gain = 1.0 - test_eval.overall.mae / persistence.overall.mae;
    r.check(
        "synthetic convergence",
        report.history.len() == 200
            && train_ratio < 0.10
            && gain >= 0.20
            && elapsed < Duration::from_secs(600),
        format!(
            "train MAE {:.3} = {:.1}% of std {:.2} (< 10%); test MAE {:.3} vs persistence {:.3}, \
             {:.1}% better (>= 20%); {} < 600s",
            train_eval.overall.mae,
            100.0 * train_ratio,
            std,
            test_eval.overall.mae,
            persistence.overall.mae,
            100.0 * gain,
            secs(elapsed)
        ),
    );

    let median = |xs: &mut Vec<f64>| {
        xs.sort_by(f64::total_cmp);
        let n = xs.len();
        if n % 2 == 1 {
            xs[n / 2]
        } else {
            0.5 * (xs[n / 2 - 1] + xs[n / 2])
        }
    };
    let tenth = report.history.len() / 10;
    let mut first: Vec<f64> = report.history[..tenth].iter().map(|e| e.train_loss).collect();
    let mut last: Vec<f64> = report.history[report.history.len() - tenth..].iter().map(|e| e.train_loss).collect();
    let (a, b) = (median(&mut first), median(&mut last));
    r.check(
        "loss decreases",
        b < a,
        format!("median train loss {a:.3} over the first {tenth} epochs, {b:.3} over the last {tenth}"),
    );
}

fn parameter_count(r: &mut Report) {
    let out = run_cli(
        Command::Params {
            nodes: 307,
            channels: 3,
            edges: 340,
        },
        &[("d", "64"), ("k", "3")],
    );
    let total: f64 = out
        .lines()
        .find(|l| l.starts_with("params:total"))
        .and_then(|l| l.rsplit(',').next())
        .and_then(|v| v.parse().ok())
        .unwrap();
    let lc = plan_dilations(12, 3).unwrap();
    let cfg = ModelConfig {
        nodes: 307,
        channels: 3,
        hidden: 64,
        input_len: 12,
        horizon: 12,
        kernel: 3,
        dilations: lc.dilations,
        delta_adt: 0.5,
        slots_per_day: 288,
    };
    let net = Stjgcn::<f32>::new(cfg.clone(), build_predefined(&ring(307), cfg.required_gaps().unwrap(), 0.5).unwrap(), 0)
        .unwrap();
    let direct = count_parameters(net.params()).total as f64;
    let rel = (total - 310_000.0) / 310_000.0;
    r.check(
        "parameter count",
        rel.abs() <= 0.25 && direct == total,
        format!("N=307, C=3, d=64, K=3, P=Q=12: {total} parameters, {:+.1}% from 0.31M (within 25%)", 100.0 * rel),
    );
}

fn loss_identity(r: &mut Report) {
    let mut tape = Tape::<f64>::new();
    let pred = tape.param(Tensor::new(&[1, 1, 2], vec![11.0, 18.0]).unwrap());
    let truth = Tensor::new(&[1, 1, 2], vec![10.0, 20.0]).unwrap();
    let loss = combined_loss(&mut tape, pred, &truth, 1.0).unwrap();
    let value = tape.value(loss).item();
    r.check("loss identity", value == 11.5, format!("truth [10, 20], prediction [11, 18], beta 1 gives {value}"));
}

fn run_cli(cmd: Command, pairs: &[(&str, &str)]) -> String {
    let opts = Options {
        config: None,
        overrides: pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        format: Format::Csv,
    };
    let mut out = Vec::new();
    let status = cli::execute(&cmd, &opts, &mut out, &mut Vec::new()).unwrap();
    assert_eq!(status, cli::Status::Success);
    String::from_utf8(out).unwrap()
}

fn determinism_and_round_trip(r: &mut Report) {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_str().unwrap();
    run_cli(
        Command::Synth {
            nodes: 4,
            steps: 500,
            interval: 5,
            noise: 1.0,
        },
        &[("out", root), ("seed", "5")],
    );
    let data = dir.path().join(cli::SYNTH_DATA_FILE);
    let dist = dir.path().join(cli::SYNTH_DISTANCE_FILE);
    let out = dir.path().join("run");
    let pairs = [
        ("data", data.to_str().unwrap()),
        ("distances", dist.to_str().unwrap()),
        ("out", out.to_str().unwrap()),
        ("p", "6"),
        ("q", "3"),
        ("d", "8"),
        ("epochs", "3"),
        ("seed", "7"),
        ("strict", "true"),
    ];
    let mut runs = Vec::new();
    for _ in 0..2 {
        run_cli(Command::Train, &pairs);
        runs.push((fs::read(out.join(HISTORY_FILE)).unwrap(), fs::read(out.join(CHECKPOINT_FILE)).unwrap()));
    }
    let same = runs[0] == runs[1];
    r.check(
        "determinism",
        same,
        format!(
            "two strict runs with seed 7: history ({} bytes) and checkpoint ({} bytes) {}",
            runs[0].0.len(),
            runs[0].1.len(),
            if same { "byte-identical" } else { "differ" }
        ),
    );

    let ckpt_path = out.join(CHECKPOINT_FILE);
    let ckpt_bytes = fs::read(&ckpt_path).unwrap();
    let bundle = Bundle::<f64>::load(&ckpt_path).unwrap();
    let resaved = dir.path().join("again.stjgcn");
    bundle.save(&resaved).unwrap();
    let ckpt_same = fs::read(&resaved).unwrap() == ckpt_bytes;

    let csv_bytes = fs::read(&data).unwrap();
    let ds = TrafficDataset::load(&data).unwrap();
    let csv_again = dir.path().join("again.csv");
    ds.save(&csv_again).unwrap();
    let csv_same = fs::read(&csv_again).unwrap() == csv_bytes;
    let bin = dir.path().join("data.bin");
    ds.save(&bin).unwrap();
    let bin_bytes = fs::read(&bin).unwrap();
    let bin_again = dir.path().join("again.bin");
    TrafficDataset::load(&bin).unwrap().save(&bin_again).unwrap();
    let bin_same = fs::read(&bin_again).unwrap() == bin_bytes;
    r.check(
        "round-trip",
        ckpt_same && csv_same && bin_same,
        format!("checkpoint {ckpt_same}, dataset csv {csv_same}, dataset binary {bin_same} (byte-identical after load and save)"),
    );
}

#[test]
fn acceptance() {
    let mut r = Report::default();
    gradient_suite(&mut r);
    oracle_equivalence(&mut r);
    normalization_invariants(&mut r);
    causality(&mut r);
    parameter_count(&mut r);
    loss_identity(&mut r);
    determinism_and_round_trip(&mut r);
    synthetic_convergence(&mut r);
    assert!(r.failed.is_empty(), "failed: {:?}", r.failed);
}
