use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ratchet::config::{load_config, parse_config, Command};
use ratchet::{app, Error};

/// Simulate the on-resonance double-kicked rotor ratchet and write
/// plot-ready CSV with a JSON metadata sidecar.
#[derive(Parser)]
#[command(name = "ratchet", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Quantum mean momentum from a momentum eigenstate.
    Evolve(Common),
    /// Ensemble mean momentum under the eta-classical map.
    Classical(Common),
    /// Folded phase-space points of the eta-classical map.
    Portrait(Common),
    /// Acceleration rate over the fitting window.
    Rate(Common),
    /// Rates over a one- or two-axis parameter grid.
    Scan(Common),
    /// Quasi-momentum averaged momentum increase.
    Beta(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config, or the `.json` metadata of an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output stem; writes `<out>.csv` and `<out>.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Config overrides as `--key value` or `--key=value`, e.g.
    /// `--k_tilde 4 --axis1.points 24`.
    #[arg(
        trailing_var_arg = true,
        allow_hyphen_values = true,
        value_name = "--KEY VALUE"
    )]
    overrides: Vec<String>,
}

fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>, Error> {
    let mut pairs = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let key = arg
            .strip_prefix("--")
            .ok_or_else(|| Error::Config(format!("expected `--key value`, found `{arg}`")))?;
        match key.split_once('=') {
            Some((k, v)) => pairs.push((k.to_string(), v.to_string())),
            None => {
                let value = it
                    .next()
                    .ok_or_else(|| Error::Config(format!("`--{key}` needs a value")))?;
                pairs.push((key.to_string(), value.clone()));
            }
        }
    }
    Ok(pairs)
}

fn execute(cli: Cli) -> Result<(), Error> {
    let (command, common) = match cli.command {
        Cmd::Evolve(c) => (Command::Evolve, c),
        Cmd::Classical(c) => (Command::Classical, c),
        Cmd::Portrait(c) => (Command::Portrait, c),
        Cmd::Rate(c) => (Command::Rate, c),
        Cmd::Scan(c) => (Command::Scan, c),
        Cmd::Beta(c) => (Command::Beta, c),
    };
    let mut config_path = common.config;
    let mut out = common.out;
    let mut overrides = vec![("command".to_string(), command.name().to_string())];
    // `--config`/`--out` given after the first override land in the trailing list
    for (key, value) in parse_overrides(&common.overrides)? {
        match key.as_str() {
            "config" => config_path = Some(PathBuf::from(value)),
            "out" => out = Some(PathBuf::from(value)),
            _ => overrides.push((key, value)),
        }
    }
    if let Some(out) = &out {
        overrides.push(("output".to_string(), toml_string(&out.to_string_lossy())));
    }
    let config = match &config_path {
        Some(path) => load_config(path, &overrides)?,
        None => parse_config("", &overrides)?,
    };
    let report = app::run(&config)?;
    for w in &report.metadata.warnings {
        eprintln!("warning: {w}");
    }
    for f in &report.files {
        println!("{}", f.display());
    }
    Ok(())
}

/// Quote a path so the override parser reads it as a string verbatim.
fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({
                "error": e.kind(),
                "message": e.to_string(),
                "exit_code": e.exit_code(),
            });
            eprintln!("{record}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
