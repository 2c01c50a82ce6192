//! `fishquota run <config>`: run one scenario and write its outputs.
//!
//! Exit status: 0 on success, 2 when the config is unreadable or invalid
//! (nothing is written), 3 when the model fails, 4 when writing fails.

mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "fishquota", version, about = "Fishery quota scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a JSON config.
    Run {
        config: PathBuf,
        /// Replace the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; beats the config's `output_dir`.
        #[arg(long, env = "FISHQUOTA_OUT")]
        out: Option<PathBuf>,
        /// Check the config and exit without running.
        #[arg(long)]
        validate_only: bool,
    },
}

const SCHEMA: u8 = 2;
const MODEL: u8 = 3;
const WRITE: u8 = 4;

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_all(dir: &Path, files: &run::Outputs, manifest: &[u8]) -> Result<(), String> {
    for (name, bytes) in files
        .iter()
        .map(|(n, b)| (n.as_str(), b.as_slice()))
        .chain([("manifest.json", manifest)])
    {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
        }
        std::fs::write(&path, bytes).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let Command::Run {
        config,
        seed,
        out,
        validate_only,
    } = Cli::parse().command;

    let raw = match std::fs::read(&config) {
        Ok(raw) => raw,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config.display());
            return ExitCode::from(SCHEMA);
        }
    };
    let cfg = match std::str::from_utf8(&raw)
        .map_err(|e| e.to_string())
        .and_then(config::parse)
    {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: invalid config {}: {e}", config.display());
            return ExitCode::from(SCHEMA);
        }
    };
    if let Err(e) = cfg.scenario.validate() {
        eprintln!("error: invalid config {}: {e}", config.display());
        return ExitCode::from(SCHEMA);
    }
    if validate_only {
        println!(
            "{}: valid {} scenario",
            config.display(),
            cfg.scenario.name()
        );
        return ExitCode::SUCCESS;
    }

    let seed = seed.unwrap_or(cfg.seed);
    let dir = out
        .or(cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let files = match run::run(&cfg.scenario, seed) {
        Ok(files) => files,
        Err(e) => {
            eprintln!("error: {} scenario failed: {e}", cfg.scenario.name());
            return ExitCode::from(MODEL);
        }
    };

    let listing: Vec<_> = files
        .iter()
        .map(|(name, bytes)| json!({ "path": name, "sha256": sha256(bytes), "bytes": bytes.len() }))
        .collect();
    let manifest = json!({
        "scenario": cfg.scenario.name(),
        "seed": seed,
        "config_sha256": sha256(&raw),
        "version": env!("CARGO_PKG_VERSION"),
        "files": listing,
    });
    let mut manifest = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    manifest.push('\n');

    if let Err(e) = write_all(&dir, &files, manifest.as_bytes()) {
        eprintln!("error: writing outputs: {e}");
        return ExitCode::from(WRITE);
    }
    println!("{} files written to {}", files.len() + 1, dir.display());
    ExitCode::SUCCESS
}
