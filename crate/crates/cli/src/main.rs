use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lbto_core::extract::ExecOptions;
use lbto_core::io::config::{load_spec, ExperimentSpec};
use lbto_core::io::experiment::{self, ExperimentError};
use lbto_core::io::report::metrics_csv;
use lbto_core::reconstruct::Mode;

const DESK_SCALE: &str = "note: timings are desk-scale, not paper-scale";

#[derive(Parser)]
#[command(name = "lbto", version, about = "Flow-map extraction with block-local termination")]
struct Cli {
    /// Reserved; every pipeline is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract basis flows and write one run directory per strategy.
    Extract { spec: PathBuf },
    /// Stitch pathlines from stored basis flows and score them against the ground truth.
    Reconstruct {
        spec: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Sweep intervals and reductions; write metrics.csv (and bounds.csv).
    Metrics { spec: PathBuf },
    /// Write the FTLE field of one interval for each strategy.
    Ftle {
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        interval: usize,
    },
    /// Time both strategies; write timing.csv and bench.csv.
    Bench { spec: PathBuf },
    /// Ground-truth pathlines over the whole domain.
    Truth { spec: PathBuf },
    /// Accuracy of run B reconstructed at the seeds of run A.
    Compare {
        reference: PathBuf,
        candidate: PathBuf,
        #[arg(long, default_value = "gridfill")]
        mode: Mode,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn spec(path: &Path) -> Result<ExperimentSpec, ExperimentError> {
    Ok(load_spec(path)?)
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    let opts = ExecOptions::from_env();
    match cli.command {
        Command::Extract { spec: path } => {
            for dir in experiment::extract(&spec(&path)?, &opts)? {
                println!("{}", dir.display());
            }
        }
        Command::Reconstruct { spec: path, mode } => {
            let s = spec(&path)?;
            let mode = mode.unwrap_or(s.reconstruction.mode);
            for sum in experiment::reconstruct(&s, mode, &opts)? {
                println!(
                    "{} {}: {}/{} pathlines complete, mean error {:e}",
                    sum.strategy.as_str(),
                    mode.as_str(),
                    sum.complete,
                    sum.pathlines,
                    sum.mean_l2
                );
            }
        }
        Command::Metrics { spec: path } => {
            let out = experiment::metrics(&spec(&path)?, &opts)?;
            print!("{}", metrics_csv(&out.rows));
            if out.rows.iter().any(|r| r.speedup.is_some()) {
                println!("{DESK_SCALE}");
            }
        }
        Command::Ftle { spec: path, interval } => {
            let s = spec(&path)?;
            if interval as u64 >= s.extraction.total_cycles / s.extraction.interval {
                return Err(ExperimentError::Invalid(format!("interval {interval} is past the last interval")));
            }
            for (p, degenerate) in experiment::ftle(&s, interval, &opts)? {
                println!("{} ({degenerate} degenerate nodes)", p.display());
            }
        }
        Command::Bench { spec: path } => {
            let out = experiment::bench(&spec(&path)?, &opts)?;
            println!("{}", out.timing_path.display());
            print!("{}", std::fs::read_to_string(&out.summary_path).map_err(|e| ExperimentError::Format(e.into()))?);
            println!("bto <= exchange in {}/{} repetitions", out.bto_faster_count(), out.bto_s.len());
            println!("{DESK_SCALE}");
        }
        Command::Truth { spec: path } => {
            println!("{}", experiment::truth(&spec(&path)?)?.display());
        }
        Command::Compare { reference, candidate, mode, out } => {
            let (row, _) = experiment::compare(&reference, &candidate, mode)?;
            let csv = metrics_csv(&[row]);
            match out {
                Some(p) => std::fs::write(p, csv).map_err(|e| ExperimentError::Format(e.into()))?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
