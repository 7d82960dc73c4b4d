mod config;
mod error;
mod output;
mod report;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use weakdirect::protocols::{calibrate_scheme1, PointerConfig, DEFAULT_SWEEP};

use crate::error::{io_err, CliError, Result};
use crate::output::{write_json, write_table, Format, ESTIMATES_CSV, ESTIMATES_JSON, MANIFEST, RECONSTRUCTED};

#[derive(Parser)]
#[command(name = "weakdirect", version, about = "Simulated weak-measurement state reconstruction")]
struct Cli {
    /// Overrides the sampling seed of the scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, env = "WEAKDIRECT_OUT_DIR", default_value = "results")]
    out_dir: PathBuf,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario over its coupling sweep.
    Run { config: PathBuf },
    /// Summarize convergence of a finished run.
    Report { results: PathBuf },
    /// Check the two-pointer scale factor against `|0><0|`.
    Calibrate {
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP.to_vec())]
        sweep: Vec<f64>,
        #[arg(long, default_value_t = 512)]
        points: usize,
        /// Half-width of the pointer grid in units of sigma.
        #[arg(long, default_value_t = 16.0)]
        half_width: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
    },
    /// Print the exact values a scenario estimates.
    Oracle { config: PathBuf },
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn execute(cli: Cli) -> Result<()> {
    let threads = cli.threads.unwrap_or_else(rayon::current_num_threads);
    if cli.threads.is_some() {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::config(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Run { config } => {
            let mut scenario = config::load(&config)?;
            if let (Some(seed), Some(plan)) = (cli.seed, scenario.config.sampling.as_mut()) {
                plan.seed = seed;
            }
            let format = cli.format.unwrap_or_default();
            let out = run::run(&scenario, format, threads)?;
            create_dir(&cli.out_dir)?;
            let table = write_table(&cli.out_dir, ESTIMATES_CSV, ESTIMATES_JSON, &out.rows, format)?;
            write_json(&cli.out_dir.join(RECONSTRUCTED), &out.reconstructed)?;
            write_json(&cli.out_dir.join(MANIFEST), &out.manifest)?;
            for entry in &out.reconstructed.sweep {
                println!("gt={} {}={:.3e}", entry.gt, out.reconstructed.distance_kind, entry.distance);
            }
            println!("wrote {}", table.display());
        }
        Command::Report { results } => {
            let (summary, paths) = report::report(&results, cli.format)?;
            for row in summary.rows.iter().filter(|r| r.setting == report::STATE_ROW) {
                println!(
                    "smallest-gt distance {:.3e}, extrapolated distance {:.3e}",
                    row.smallest_gt_error, row.extrapolated_error
                );
            }
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Command::Calibrate { sweep, points, half_width, sigma } => {
            let pointer = PointerConfig { points, half_width, sigma };
            let cal = calibrate_scheme1(&sweep, &pointer).map_err(|e| CliError::config(format!("calibrate: {e}")))?;
            for ((gt, m), e) in cal.gt.iter().zip(&cal.measured_kappa).zip(&cal.expected_kappa) {
                println!("gt={gt} measured={m:.10e} expected={e:.10e}");
            }
            println!("extrapolated ratio {:.12}", cal.extrapolated_ratio);
            create_dir(&cli.out_dir)?;
            write_json(&cli.out_dir.join("calibration.json"), &cal)?;
            if !cal.passes() {
                return Err(CliError::protocol("calibration: ratio differs from 1 by more than 1%"));
            }
        }
        Command::Oracle { config } => {
            let scenario = config::load(&config)?;
            let rows = run::oracle_rows(&scenario)?;
            for row in &rows {
                println!("{} {:+.15e} {:+.15e}i", row.setting, row.re, row.im);
            }
            create_dir(&cli.out_dir)?;
            write_table(&cli.out_dir, "oracle.csv", "oracle.json", &rows, cli.format.unwrap_or_default())?;
            write_json(&cli.out_dir.join("oracle_reference.json"), &run::oracle_reference(&scenario)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category.exit_code() as u8)
        }
    }
}
