//! The `aru` command-line frontend: `synth`, `train`, `eval` and `sweep`.
//!
//! Settings come from defaults, then an optional `--config` file of
//! `key = value` lines, then command-line flags. Every config key has a flag
//! of the same name with dashes, e.g. `--encoder-len 96`.

mod commands;
mod config;

pub use commands::{
    cell_config, cmd_eval, cmd_synth, cmd_sweep, cmd_train, evaluate, fit, sweep_cell, Fitted, SweepRow,
    CONFIG_ECHO, DATA_FILE, FORECAST_DIR, LAST_FILE, MANIFEST_FILE, MODEL_FILE, PREPROCESSOR_FILE,
    REPORT_JSON, REPORT_TABLE, SWEEP_TABLE, TRAIN_LOG,
};
pub use config::{ProtocolKind, RunConfig, KEYS};

use clap::{Arg, ArgAction, ArgMatches, Command};

use crate::error::{Error, Result};

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn subcommand(name: &'static str, about: &'static str) -> Command {
    let mut cmd = Command::new(name).about(about).arg(
        Arg::new("config")
            .long("config")
            .short('c')
            .value_name("FILE")
            .help("key = value config file"),
    );
    for key in KEYS {
        cmd = cmd.arg(
            Arg::new(*key)
                .long(flag_name(key))
                .value_name("VALUE")
                .action(ArgAction::Set),
        );
    }
    cmd
}

pub fn command() -> Command {
    Command::new("aru")
        .about("Streaming adaptive forecasting with the Adaptive Recurrent Unit")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(subcommand("synth", "Generate the synthetic benchmark dataset"))
        .subcommand(subcommand("train", "Train a forecaster on a CSV dataset"))
        .subcommand(subcommand("eval", "Evaluate a checkpoint (fixed or streaming protocol)"))
        .subcommand(subcommand("sweep", "Synthetic length x head x id sweep"))
}

/// Resolve the effective config of a subcommand invocation.
pub fn resolve_config(matches: &ArgMatches) -> Result<RunConfig> {
    let mut cfg = match matches.get_one::<String>("config") {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for key in KEYS {
        if let Some(v) = matches.get_one::<String>(key) {
            cfg.set(key, v)
                .map_err(|e| Error::InvalidConfig(format!("--{}: {e}", flag_name(key))))?;
        }
    }
    Ok(cfg)
}

fn run(args: impl IntoIterator<Item = std::ffi::OsString>) -> Result<bool> {
    let matches = command().try_get_matches_from(args).unwrap_or_else(|e| e.exit());
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let cfg = resolve_config(sub)?;
    if let Some(n) = cfg.threads {
        // Fails only if the pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match name {
        "synth" => cmd_synth(&cfg).map(|_| true),
        "train" => cmd_train(&cfg).map(|_| true),
        "eval" => {
            let out = cmd_eval(&cfg)?;
            print!("{}", out.report.to_table());
            Ok(true)
        }
        "sweep" => {
            let rows = cmd_sweep(&cfg)?;
            println!("{}", SweepRow::TSV_HEADER);
            for r in &rows {
                println!("{}", r.to_tsv());
            }
            Ok(rows.iter().all(|r| r.result.is_ok()))
        }
        _ => unreachable!("unknown subcommand {name}"),
    }
}

/// Entry point of the binary. Returns the process exit code: 0 only when
/// every requested output was written.
pub fn main_with_args(args: impl IntoIterator<Item = std::ffi::OsString>) -> i32 {
    match run(args) {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("error: some sweep cells failed; see the sweep table");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
