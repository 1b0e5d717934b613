// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use config::{resolve, Command, Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "pnlayer", version, about = "Nonlocal layer solver and verification suite")]
struct Cli {
    /// Command to run; falls back to the `command` key of the config.
    #[arg(value_enum)]
    command: Option<Command>,
    /// JSON configuration document.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

fn fail(code: u8, status: &str, message: String) -> ExitCode {
    eprintln!("{}", json!({ "status": status, "message": message }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut config = match RunConfig::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return fail(2, "config_error", e.to_string()),
    };
    config.apply(&cli.overrides);
    let threads = config.threads;
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
        Ok(p) => p,
        Err(e) => return fail(2, "config_error", e.to_string()),
    };
    let resolved = match pool.install(|| resolve(config, cli.command)) {
        Ok(r) => r,
        Err(e) => return fail(2, "config_error", e.to_string()),
    };
    let outcome = match pool.install(|| commands::run(&resolved)) {
        Ok(o) => o,
        Err(e) => return fail(1, "error", e.to_string()),
    };
    let mode = if threads == 1 { "single-thread" } else { "multi-thread" };
    let mut report = outcome.report;
    if let Some(obj) = report.as_object_mut() {
        obj.insert("status".into(), json!(if outcome.passed { "passed" } else { "failed" }));
        obj.insert("threads".into(), json!(threads));
        obj.insert("mode".into(), json!(mode));
        obj.insert("config".into(), serde_json::to_value(&resolved.config).expect("config serializes"));
    }
    let dir = &resolved.config.output_dir;
    if let Err(e) = std::fs::create_dir_all(dir) {
        return fail(1, "error", format!("cannot create {}: {e}", dir.display()));
    }
    let mut artifacts = outcome.artifacts;
    // the main report carries status and config as well
    if let Some((_, text)) = artifacts.iter_mut().find(|(name, _)| name.ends_with(".json")) {
        *text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    }
    for (name, text) in &artifacts {
        if let Err(e) = std::fs::write(dir.join(name), text) {
            return fail(1, "error", format!("cannot write {name}: {e}"));
        }
    }
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if outcome.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
