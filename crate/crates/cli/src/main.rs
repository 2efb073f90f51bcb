mod args;
mod commands;
mod error;
mod ingest;
mod manifest;
mod render;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;

use args::{Cli, Command, Format};
use error::Failure;
use manifest::{now, InputDigest, Report, RunManifest, SeedInfo, SCHEMA};

fn resolve_seed(flag: Option<u64>) -> SeedInfo {
    match flag {
        Some(value) => SeedInfo { value, source: "flag" },
        None => SeedInfo { value: rand::random(), source: "entropy" },
    }
}

struct Emit<'a> {
    cli: &'a Cli,
    command: &'static str,
    config: serde_json::Value,
    seed: SeedInfo,
    started_at: String,
}

impl Emit<'_> {
    fn finish<T: Serialize>(
        self,
        result: T,
        inputs: Vec<InputDigest>,
        table: impl Fn(&T) -> String,
    ) -> Result<(), Failure> {
        let text = match self.cli.format {
            Format::Table => table(&result),
            Format::Json => {
                let report = Report {
                    schema: SCHEMA,
                    manifest: RunManifest {
                        command: self.command.into(),
                        config: self.config,
                        seed: self.seed,
                        version: env!("CARGO_PKG_VERSION"),
                        inputs,
                        started_at: self.started_at,
                        finished_at: now(),
                    },
                    result,
                };
                let mut s = serde_json::to_string_pretty(&report).map_err(|e| Failure::Output(e.to_string()))?;
                s.push('\n');
                s
            }
        };
        match &self.cli.out {
            Some(path) => std::fs::write(path, text).map_err(|e| Failure::Output(format!("{}: {e}", path.display()))),
            None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Failure::Output(e.to_string())),
        }
    }
}

fn config_of<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).unwrap_or(serde_json::Value::Null)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(Failure::Usage("--threads must be ≥ 1".into()));
        }
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    let started_at = now();
    let emit = |command, config, seed| Emit { cli, command, config, seed, started_at: started_at.clone() };
    match &cli.command {
        Command::Fit(a) => {
            let seed = resolve_seed(a.model.seed);
            let (r, inputs) = commands::cmd_fit(a, seed.value)?;
            emit("fit", config_of(a), seed).finish(r, inputs, render::fit)
        }
        Command::Infer(a) => {
            let seed = resolve_seed(a.model.seed);
            let (r, inputs) = commands::cmd_infer(a, seed.value)?;
            emit("infer", config_of(a), seed).finish(r, inputs, render::infer)
        }
        Command::Overid(a) => {
            let (r, inputs) = commands::cmd_overid(a)?;
            emit("overid", config_of(a), SeedInfo { value: 0, source: "unused" }).finish(r, inputs, render::overid)
        }
        Command::Backtest(a) => {
            let seed = resolve_seed(a.seed);
            let (r, inputs) = commands::cmd_backtest(a, seed.value)?;
            emit("backtest", config_of(a), seed).finish(r, inputs, render::backtest)
        }
        Command::Simulate(a) => {
            let seed = resolve_seed(a.seed);
            let (r, inputs) = commands::cmd_simulate(a, seed.value)?;
            emit("simulate", config_of(a), seed).finish(r, inputs, render::simulate)
        }
        Command::Select(a) => {
            let seed = resolve_seed(a.seed);
            let (r, inputs) = commands::cmd_select(a, seed.value)?;
            emit("select", config_of(a), seed).finish(r, inputs, render::select)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({ "schema": SCHEMA, "error": e.body() });
            eprintln!("{body}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
