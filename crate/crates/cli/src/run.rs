use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

use fedselect::training::{Phase, Trainer};

use crate::build::build;
use crate::config::{parse_config, ExperimentConfig, Overrides};
use crate::error::CliError;
use crate::metrics::{emit_metrics_csv, MetricsRow};

#[derive(Debug, Parser)]
#[command(
    name = "fedselect",
    version,
    about = "Run a federated select simulation from a JSON config"
)]
pub struct Args {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Suppress progress output.
    #[arg(long)]
    pub quiet: bool,
}

/// Reads the config file and applies the flag overrides.
pub fn resolve(args: &Args) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", args.config.display())))?;
    let mut cfg = parse_config(&text)?;
    cfg.apply(&Overrides {
        seed: args.seed,
        rounds: args.rounds,
        output_dir: args.output_dir.clone(),
    });
    cfg.validate()?;
    Ok(cfg)
}

/// Runs every trial and returns the unsorted metric rows.
pub fn run_config(cfg: &ExperimentConfig, quiet: bool) -> Result<Vec<MetricsRow>, CliError> {
    let exp = build(cfg)?;
    let mut rows = Vec::new();
    for trial in 0..exp.loop_cfg.trials {
        let mut trainer = Trainer::new(exp.task.as_ref(), &exp.scheme, exp.loop_cfg, trial)?;
        let mut last = Vec::new();
        for _ in 0..exp.loop_cfg.rounds {
            let records = trainer.step_with_records()?;
            rows.extend(records.iter().map(MetricsRow::from));
            last = records;
        }
        if !quiet {
            let summary: Vec<String> = last
                .iter()
                .filter(|r| r.phase != Phase::Train)
                .map(|r| format!("{} {}={:.4}", r.phase.as_str(), r.metric, r.value))
                .collect();
            eprintln!("trial {trial}: {} rounds, {}", exp.loop_cfg.rounds, summary.join(", "));
        }
    }
    if let Some(r) = rows.iter().find(|r| !r.value.is_finite()) {
        eprintln!(
            "warning: non-finite {} {} at trial {} round {}",
            r.phase, r.metric, r.trial, r.round
        );
    }
    Ok(rows)
}

fn execute(args: &Args) -> Result<PathBuf, CliError> {
    let cfg = resolve(args)?;
    let rows = run_config(&cfg, args.quiet)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let resolved = serde_json::to_string_pretty(&cfg).map_err(|e| CliError::Io(e.to_string()))?;
    let resolved_path = dir.join("config.resolved.json");
    std::fs::write(&resolved_path, resolved + "\n")
        .map_err(|e| CliError::Io(format!("{}: {e}", resolved_path.display())))?;
    let metrics = dir.join("metrics.csv");
    emit_metrics_csv(&metrics, &rows)?;
    Ok(metrics)
}

/// Entry point of the binary; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&args) {
        Ok(path) => {
            if !args.quiet {
                eprintln!("wrote {}", path.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
