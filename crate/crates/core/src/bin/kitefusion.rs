use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kitefusion::evalio::{
    bode_table, compare_approaches, read_log_file, run_aligned, write_estimates, write_log, Config,
};
use kitefusion::pipelines::Approach;
use kitefusion::simkite::synthesize;
use kitefusion::Result;

#[derive(Parser)]
#[command(name = "kitefusion", version, about = "Tethered-wing state estimation from logged or simulated sensor data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a figure-eight flight and write a sensor log with truth columns.
    Simulate {
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Overrides the `seed` key of the configuration.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run one observer over a log and write the estimates.
    Estimate {
        log: PathBuf,
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// 1: GPS + barometer, 2: with sphere correction, 3: line angle.
        #[arg(short, long)]
        approach: Option<u8>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compare the three observers on a log and write the RMSE table.
    Evaluate {
        log: PathBuf,
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write the frequency responses of the filters.
    Bode {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::from_file(p),
        None => Ok(Config::default()),
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, seed, output } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let sim = synthesize(&cfg.trajectory(), &cfg.noise(), &cfg.geometry())?;
            let mut out = open_output(output.as_deref())?;
            write_log(&sim.records(), &sim.metadata(), &mut out)?;
            out.flush()?;
        }
        Command::Estimate { log, config, approach, output } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(a) = approach {
                cfg.approach = a;
            }
            let approach: Approach = cfg.approach()?;
            let frames: Vec<_> = read_log_file(&log)?.into_iter().map(|r| r.frame).collect();
            let outputs: Vec<_> = run_aligned(cfg.estimator(approach), &frames)?.into_iter().flatten().collect();
            let mut out = open_output(output.as_deref())?;
            write_estimates(&outputs, &mut out)?;
            out.flush()?;
        }
        Command::Evaluate { log, config, output } => {
            let cfg = load_config(config.as_deref())?;
            let report = compare_approaches(&read_log_file(&log)?, &cfg)?;
            let mut out = open_output(output.as_deref())?;
            out.write_all(report.to_csv().as_bytes())?;
            out.flush()?;
        }
        Command::Bode { config, output } => {
            let cfg = load_config(config.as_deref())?;
            let table = bode_table(&cfg)?;
            let mut out = open_output(output.as_deref())?;
            out.write_all(table.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kitefusion: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
