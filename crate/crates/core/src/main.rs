use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};

use stjgcn::cli::{execute, exit_code, Command, Format, Options, Split, Status};
use stjgcn::data::config::KEYS;

/// Spatio-temporal joint graph convolutional network forecasting.
///
/// Every run setting can be given in a `key = value` config file and
/// overridden with a flag of the same name, e.g. `--batch_size 32`.
#[derive(Parser)]
#[command(name = "stjgcn", version)]
struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output format of result tables.
    #[arg(long, global = true, default_value = "table")]
    format: Format,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the distance-based adjacency for gaps 0..k and report its sparsity.
    BuildGraph {
        /// Node count; defaults to one more than the largest index in the distance file.
        #[arg(long)]
        nodes: Option<usize>,
    },
    /// Train a model and write config, history and checkpoint into `out`.
    Train,
    /// Score a checkpoint on one split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Write every window's forecasts and targets to this CSV.
        #[arg(long)]
        dump_windows: Option<PathBuf>,
    },
    /// Forecast the horizon following a step of the data.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Index of the last observed step; defaults to the end of the data.
        #[arg(long)]
        at: Option<usize>,
    },
    /// Compare tape gradients with finite differences on a tiny model.
    Gradcheck {
        #[arg(long, default_value_t = 4)]
        nodes: usize,
    },
    /// Report parameter counts and per-module cost terms.
    Params {
        #[arg(long, default_value_t = 307)]
        nodes: usize,
        #[arg(long, default_value_t = 3)]
        channels: usize,
        #[arg(long, default_value_t = 340)]
        edges: usize,
    },
    /// Write a synthetic dataset and distance file into `out`.
    Synth {
        #[arg(long, default_value_t = 10)]
        nodes: usize,
        #[arg(long, default_value_t = 2016)]
        steps: usize,
        /// Minutes between steps.
        #[arg(long, default_value_t = 5)]
        interval: u32,
        /// Multiplier on the random innovations.
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
    },
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::BuildGraph { nodes } => Command::BuildGraph { nodes },
            Cmd::Train => Command::Train,
            Cmd::Evaluate {
                checkpoint,
                split,
                dump_windows,
            } => Command::Evaluate {
                checkpoint,
                split,
                dump_windows,
            },
            Cmd::Predict { checkpoint, at } => Command::Predict { checkpoint, at },
            Cmd::Gradcheck { nodes } => Command::Gradcheck { nodes },
            Cmd::Params { nodes, channels, edges } => Command::Params { nodes, channels, edges },
            Cmd::Synth {
                nodes,
                steps,
                interval,
                noise,
            } => Command::Synth {
                nodes,
                steps,
                interval,
                noise,
            },
        }
    }
}

fn key_arg(key: &'static str) -> Arg {
    let arg = Arg::new(key)
        .long(key)
        .global(true)
        .value_name("VALUE")
        .allow_negative_numbers(true)
        .help(format!("Override the `{key}` run setting"))
        .action(ArgAction::Set);
    if key == "strict" {
        arg.num_args(0..=1).default_missing_value("true")
    } else {
        arg
    }
}

fn overrides(m: &ArgMatches) -> Vec<(String, String)> {
    // global args are propagated into the subcommand's matches
    let sub = m.subcommand().map(|(_, s)| s).unwrap_or(m);
    KEYS.iter()
        .filter_map(|&k| sub.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
        .collect()
}

fn main() -> ExitCode {
    let cmd = KEYS.iter().fold(Cli::command(), |c, &k| c.arg(key_arg(k)));
    let matches = match cmd.try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let opts = Options {
        config: cli.config,
        overrides: overrides(&matches),
        format: cli.format,
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut log = io::stderr();
    let result = execute(&cli.command.into(), &opts, &mut out, &mut log);
    let _ = out.flush();
    match result {
        Ok(Status::Success) => ExitCode::SUCCESS,
        Ok(Status::Failed(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
