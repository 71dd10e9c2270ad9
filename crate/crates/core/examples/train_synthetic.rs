//! Train a small model on generated sensor data and compare it with the
//! persistence forecast.
//!
//! cargo run --release --example train_synthetic -- [epochs] [delta_adt]

use std::time::Instant;

use stjgcn::data::{generate_synthetic, Precision, RunConfig, SynthConfig};
use stjgcn::model::Stjgcn;
use stjgcn::train::{evaluate, evaluate_persistence, train, Prepared};

fn main() -> stjgcn::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map_or(200, |a| a.parse().expect("epochs"));
    let delta_adt = args.next().map_or(0.0, |a| a.parse().expect("delta_adt"));

    let (ds, graph) = generate_synthetic(&SynthConfig::new(10, 2016, 5, 1))?;
    let run = RunConfig {
        d: 16,
        epochs,
        delta_adt,
        precision: Precision::F32,
        seed: 1,
        ..RunConfig::default()
    };
    let data = Prepared::<f32>::new(&ds, run.p, run.q, &run.split_spec(), 0)?;
    let mut model: Stjgcn<f32> = run.build_model(&ds, &graph)?;
    println!(
        "windows: train {}, val {}, test {}; dilations {:?}",
        data.splits().train.len(),
        data.splits().val.len(),
        data.splits().test.len(),
        model.config().dilations
    );

    let clock = Instant::now();
    let report = train(&mut model, &data, &run.train_config(), |r| {
        if r.epoch == 1 || r.epoch % 10 == 0 {
            println!(
                "epoch {:>3}  train {:8.3}  val {:8.3}  val mae {:7.3}  ({:.0?})",
                r.epoch,
                r.train_loss,
                r.val_loss,
                r.val_mae,
                clock.elapsed()
            );
        }
    })?;
    println!("best epoch {:?}", report.best_epoch);

    let target_std = data.zscore().std[0];
    let train_eval = evaluate(&mut model, &data, &data.splits().train.clone(), 256)?;
    let test = data.splits().test.clone();
    let model_eval = evaluate(&mut model, &data, &test, 256)?;
    let baseline = evaluate_persistence(&data, &test);
    println!(
        "train MAE {:.3} ({:.1}% of std {:.2})",
        train_eval.overall.mae,
        100.0 * train_eval.overall.mae / target_std,
        target_std
    );
    println!(
        "test MAE {:.3}, persistence {:.3}, improvement {:.1}%",
        model_eval.overall.mae,
        baseline.overall.mae,
        100.0 * (1.0 - model_eval.overall.mae / baseline.overall.mae)
    );
    Ok(())
}
