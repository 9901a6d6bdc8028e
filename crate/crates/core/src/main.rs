use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use twopart::harness::{
    run_identification_experiment, run_invariant_suite, run_redundancy_experiment, triangle_holds, write_records,
    ExperimentConfig, ExperimentOutput, InvariantSection, RecordKind,
};
use twopart::scheme::DeltaMode;
use twopart::Error;

#[derive(Parser)]
#[command(name = "twopart", version, about = "Two-stage universal lossy coding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// CSV output path; overrides `experiment.output`.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Master seed; overrides `experiment.seed` and `invariants.seed`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    delta_mode: Option<DeltaArg>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum DeltaArg {
    Paper,
    Practical,
}

#[derive(Subcommand)]
enum Command {
    /// Lagrangian redundancy against the oracle design.
    Redundancy,
    /// Identification distances of the first stage.
    Identify,
    /// Cross-module invariant checks.
    Invariants {
        /// Corrupt every encoded stream; the round-trip check must then fail.
        #[arg(long)]
        inject_corruption: bool,
    },
}

const EXIT_CHECK: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("--config is required for this subcommand".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        config.experiment.seed = s;
        config.invariants.seed = s;
    }
    if let Some(t) = cli.threads {
        config.experiment.threads = t;
    }
    if let Some(d) = cli.delta_mode {
        config.scheme.delta_mode = match d {
            DeltaArg::Paper => DeltaMode::Paper,
            DeltaArg::Practical => DeltaMode::Practical,
        };
    }
    if let Some(o) = &cli.out {
        config.experiment.output = Some(o.display().to_string());
    }
    config.validate()?;
    Ok(config)
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidConfig(_)
            | Error::ConfigParse(_)
            | Error::InvalidParameter { .. }
            | Error::InvalidFamily(_)
            | Error::Io(_)
    )
}

fn emit(config: &ExperimentConfig, out: &ExperimentOutput) -> Result<(), Error> {
    match &config.experiment.output {
        Some(p) => write_records(std::fs::File::create(p)?, &out.records, config.experiment.timestamp),
        None => write_records(std::io::stdout().lock(), &out.records, config.experiment.timestamp),
    }
}

fn summary_lines(out: &ExperimentOutput) {
    for r in out.records.iter().filter(|r| r.kind == RecordKind::Summary) {
        eprintln!(
            "n={:<5} trials={:<4} redundancy median {:.5}  d_hat median {:.4}  b rate {:.2}  first-stage bits {:.2}",
            r.n, r.trial, r.redundancy_median, r.d_hat_median, r.b_rate, r.first_stage_bits
        );
    }
}

fn run(cli: &Cli) -> Result<bool, Error> {
    match &cli.command {
        Command::Redundancy => {
            let config = load(cli)?;
            let out = run_redundancy_experiment(&config)?;
            emit(&config, &out)?;
            summary_lines(&out);
            match out.slope {
                Some(s) => eprintln!("log-log slope {s:.3}"),
                None => eprintln!("log-log slope undefined (non-positive median or degenerate grid)"),
            }
            Ok(out.records.iter().all(|r| r.is_finite() && (r.kind == RecordKind::Fit || r.round_trip)))
        }
        Command::Identify => {
            let config = load(cli)?;
            let out = run_identification_experiment(&config)?;
            emit(&config, &out)?;
            summary_lines(&out);
            let broken = out.outcomes.iter().filter(|o| !o.flag && !triangle_holds(o)).count();
            eprintln!("triangle violations: {broken}");
            Ok(broken == 0 && out.outcomes.iter().all(|o| o.round_trip))
        }
        Command::Invariants { inject_corruption } => {
            let mut section = match &cli.config {
                Some(_) => load(cli)?.invariants,
                None => InvariantSection::default(),
            };
            if let Some(s) = cli.seed {
                section.seed = s;
            }
            section.inject_corruption |= *inject_corruption;
            let threads = cli.threads.unwrap_or(0);
            let report = if threads > 0 {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| Error::InvalidConfig(e.to_string()))?
                    .install(|| run_invariant_suite(&section))
            } else {
                run_invariant_suite(&section)
            };
            let text = report.render();
            match &cli.out {
                Some(p) => std::fs::write(p, &text)?,
                None => print!("{text}"),
            }
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK),
        Err(e) => {
            eprintln!("error: {e}");
            if is_config_error(&e) {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::from(EXIT_CHECK)
            }
        }
    }
}
