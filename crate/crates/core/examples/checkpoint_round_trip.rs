//! Train briefly, save the model with its normalization and graph, reload it
//! and check the forecasts are unchanged.
//!
//! cargo run --release --example checkpoint_round_trip

use stjgcn::cli::Bundle;
use stjgcn::data::{generate_synthetic, RunConfig, SynthConfig};
use stjgcn::model::Stjgcn;
use stjgcn::train::{predict_windows, train, Prepared};

fn main() -> stjgcn::Result<()> {
    let (ds, graph) = generate_synthetic(&SynthConfig::new(4, 600, 5, 2))?;
    let run = RunConfig {
        p: 6,
        q: 3,
        d: 8,
        epochs: 3,
        ..RunConfig::default()
    };
    let data = Prepared::<f64>::new(&ds, run.p, run.q, &run.split_spec(), 0)?;
    let mut model: Stjgcn<f64> = run.build_model(&ds, &graph)?;
    let report = train(&mut model, &data, &run.train_config(), |r| {
        println!("epoch {}  train {:.3}  val {:.3}", r.epoch, r.train_loss, r.val_loss);
    })?;

    let test = data.splits().test.clone();
    let before = predict_windows(&mut model, &data, &test, 64)?;
    let bundle = Bundle {
        run,
        model,
        zscore: data.zscore().clone(),
        graph,
        best_epoch: report.best_epoch,
    };
    let dir = std::env::temp_dir().join("stjgcn-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.stjgcn");
    bundle.save(&path)?;
    let bytes = std::fs::read(&path)?;
    println!("saved {} bytes to {}", bytes.len(), path.display());

    let mut loaded = Bundle::<f64>::load(&path)?;
    let after = predict_windows(&mut loaded.model, &data, &test, 64)?;
    let resaved = loaded.to_checkpoint()?.to_bytes()?;
    println!("forecasts identical: {}", before == after);
    println!("re-saved bytes identical: {}", resaved == bytes);
    Ok(())
}
