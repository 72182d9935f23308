use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::Value;

use t2t_cli::artifact::{sha256_hex, write_artifacts};
use t2t_cli::{layered_config, run_scenario, CliError, ScenarioKind};

/// Deterministic simulator and analysis toolkit for multi-hop
/// backscatter tag-to-tag networks.
#[derive(Debug, Parser)]
#[command(name = "t2tsim", version, about)]
struct Cli {
    /// Scenario to run.
    #[arg(value_enum)]
    scenario: ScenarioKind,

    /// JSON file overriding parts of the scenario's default config.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Individual config overrides, dotted path = JSON value
    /// (e.g. --set mac.phase_policy=shift_repeat --set n_tags=6).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Seed for all randomness in the scenario.
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Output directory for artifacts and manifest.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Print the scenario's effective config as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

fn load_patch(path: &PathBuf) -> Result<Value, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{} is not valid JSON: {e}", path.display())))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let patch = cli.config.as_ref().map(load_patch).transpose()?;
    let config = layered_config(cli.scenario, patch.as_ref(), &cli.set)?;

    if cli.print_config {
        println!(
            "{}",
            serde_json::to_string_pretty(&config).expect("config serializes")
        );
        return Ok(());
    }

    let result = run_scenario(cli.scenario, &config, cli.seed)?;
    let manifest_path = write_artifacts(
        &cli.out,
        cli.scenario.name(),
        cli.seed,
        &result.effective_config,
        &result.artifacts,
    )?;
    for a in &result.artifacts {
        println!(
            "{}  {}  ({} bytes)",
            sha256_hex(&a.bytes),
            cli.out.join(&a.name).display(),
            a.bytes.len()
        );
    }
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
