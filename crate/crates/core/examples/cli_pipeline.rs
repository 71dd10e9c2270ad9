//! The command implementations behind the binary, driven from code:
//! generate data, train, evaluate and forecast.
//!
//! cargo run --release --example cli_pipeline

use std::io;

use stjgcn::cli::{execute, Command, Format, Options, Split, CHECKPOINT_FILE, SYNTH_DATA_FILE, SYNTH_DISTANCE_FILE};

fn main() -> stjgcn::Result<()> {
    let dir = std::env::temp_dir().join("stjgcn-pipeline");
    let path = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let options = |pairs: &[(&str, String)]| Options {
        config: None,
        overrides: pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        format: Format::Table,
    };
    let (mut out, mut log) = (io::stdout(), io::stderr());

    let synth = Command::Synth {
        nodes: 5,
        steps: 800,
        interval: 5,
        noise: 1.0,
    };
    execute(&synth, &options(&[("out", path(""))]), &mut out, &mut log)?;

    let run = options(&[
        ("data", path(SYNTH_DATA_FILE)),
        ("distances", path(SYNTH_DISTANCE_FILE)),
        ("out", path("run")),
        ("p", "6".into()),
        ("q", "3".into()),
        ("d", "8".into()),
        ("epochs", "5".into()),
    ]);
    execute(&Command::Train, &run, &mut out, &mut log)?;

    let checkpoint = dir.join("run").join(CHECKPOINT_FILE);
    let evaluate = Command::Evaluate {
        checkpoint: checkpoint.clone(),
        split: Split::Test,
        dump_windows: None,
    };
    execute(&evaluate, &run, &mut out, &mut log)?;
    execute(&Command::Predict { checkpoint, at: None }, &run, &mut out, &mut log)?;
    Ok(())
}
