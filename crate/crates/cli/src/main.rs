//! `dlo-msd`: run, sweep and analyze mass-spring-damper cable simulations.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dlo_msd::io::{
    analyze_run_dir, execute_run, execute_sweep, execute_table1, load_config, read_summary,
    report_table, ConfigError, ExecuteError, OutputError, RunConfig, SUMMARY_FILE,
};
use dlo_msd::parallel::Execution;
use dlo_msd::ExperimentRecord;

#[derive(Debug, Parser)]
#[command(name = "dlo-msd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one cable and write its traces.
    Run(Common),
    /// Simulate a seeded random sample of cables and write a dataset.
    Sweep(Common),
    /// Simulate the five experiment-table presets and print the table.
    Table1(Common),
    /// Re-run the stability detectors on stored traces.
    Analyze {
        /// A run directory (with summary.toml) or a dataset directory.
        dir: PathBuf,
        /// Config supplying the analysis thresholds.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sampling seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of sampled runs (overrides `count`).
    #[arg(long)]
    count: Option<usize>,
    /// Integration steps between recorded snapshots; 0 derives it from
    /// `record_interval_s`.
    #[arg(long)]
    stride: Option<usize>,
    /// Run experiments one after another instead of in parallel.
    #[arg(long)]
    sequential: bool,
}

enum Failure {
    Config(ConfigError),
    Output(OutputError),
    Internal(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 3,
            Failure::Output(_) => 4,
            Failure::Internal(_) => 5,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "config error: {e}"),
            Failure::Output(e) => write!(f, "i/o error: {e}"),
            Failure::Internal(e) => write!(f, "simulation error: {e}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<OutputError> for Failure {
    fn from(e: OutputError) -> Self {
        Failure::Output(e)
    }
}

impl From<ExecuteError> for Failure {
    fn from(e: ExecuteError) -> Self {
        match e {
            // Model errors surface here only for inputs the config layer let
            // through, so they are reported as config problems.
            ExecuteError::Model(e) => Failure::Config(ConfigError::Parse(e.to_string())),
            ExecuteError::Output(e) => Failure::Output(e),
        }
    }
}

fn resolve(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.ranges.seed = seed;
    }
    if let Some(count) = common.count {
        if count == 0 {
            return Err(ConfigError::Invalid {
                key: "count",
                constraint: "must be >= 1".into(),
            }
            .into());
        }
        cfg.count = count;
    }
    if let Some(stride) = common.stride {
        cfg.settings.record_stride = (stride > 0).then_some(stride);
    }
    Ok(cfg)
}

fn execution(common: &Common) -> Execution {
    if common.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn print_records(records: &[ExperimentRecord], out: &Path) {
    print!("{}", report_table(records));
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} run(s) could not be simulated; see dataset.jsonl");
    }
    println!("outputs written to {}", out.display());
}

fn analyze(dir: &Path, config: Option<&Path>) -> Result<(), Failure> {
    let settings = match config {
        Some(path) => load_config(path)?.settings.analysis,
        None => RunConfig::default().settings.analysis,
    };
    let runs: Vec<PathBuf> = if dir.join(SUMMARY_FILE).is_file() {
        vec![dir.to_path_buf()]
    } else {
        let entries = fs::read_dir(dir).map_err(|source| OutputError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut runs: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(SUMMARY_FILE).is_file())
            .collect();
        runs.sort();
        runs
    };
    if runs.is_empty() {
        return Err(OutputError::Malformed {
            path: dir.to_path_buf(),
            message: format!("no {SUMMARY_FILE} found"),
        }
        .into());
    }
    println!("run\tstored\treanalyzed\ttime_to_instability_s\trelative_amplitude");
    for run in runs {
        let stored = read_summary(&run.join(SUMMARY_FILE))?.report;
        let report = analyze_run_dir(&run, &settings)?;
        println!(
            "{}\t{}\t{}\t{}\t{:.6}",
            run.display(),
            stored.classification.as_str(),
            report.classification.as_str(),
            report.time_to_instability,
            report.oscillation.relative_amplitude,
        );
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(common) => {
            let cfg = resolve(&common)?;
            let record = execute_run(&cfg, &cfg.output_dir)?;
            if let Some(e) = &record.error {
                return Err(Failure::Internal(e.clone()));
            }
            print_records(std::slice::from_ref(&record), &cfg.output_dir);
        }
        Command::Sweep(common) => {
            let cfg = resolve(&common)?;
            let records = execute_sweep(&cfg, &cfg.output_dir, execution(&common))?;
            print_records(&records, &cfg.output_dir);
        }
        Command::Table1(common) => {
            let cfg = resolve(&common)?;
            let records = execute_table1(&cfg, &cfg.output_dir, execution(&common))?;
            print_records(&records, &cfg.output_dir);
        }
        Command::Analyze { dir, config } => analyze(&dir, config.as_deref())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dlo-msd: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
