//! `nearfield` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nearfield::harness::{
    export_dictionaries, matrix_io::save_matrix, run_checks, run_sweep, simulate, Experiment, ExperimentConfig,
};
use nearfield::pipeline::Method;
use nearfield::Error;

#[derive(Debug, Parser)]
#[command(name = "nearfield", version, about = "Near-field XL-MIMO localization and channel estimation")]
struct Cli {
    /// Experiment config file (JSON). Defaults to the selected profile.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Built-in profile used when no config file is given.
    #[arg(long, global = true, default_value = "desk", value_name = "NAME")]
    profile: String,

    /// Seed of the scene (simulate, verify) or base seed of the sweep.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    out: PathBuf,

    /// Method name, e.g. proposed, proposed-omp3, antenna-wise-dft.
    #[arg(long, global = true, value_name = "NAME")]
    method: Option<String>,

    /// SNR in dB. `simulate` is noiseless without it; for `sweep` it
    /// replaces the configured SNR list.
    #[arg(long = "snr-db", global = true, value_name = "X", allow_negative_numbers = true)]
    snr_db: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the built-in self-checks on the configured geometry.
    Verify,
    /// One scene and one method; writes simulate.json, h_true.nfm and h_hat.nfm.
    Simulate,
    /// Monte-Carlo sweep; writes results.csv and results.json.
    Sweep {
        /// Override the number of trials per SNR point.
        #[arg(long)]
        trials: Option<usize>,
        /// Worker threads; 0 uses all cores.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Write the dictionaries and the designed combiner as matrix files.
    ExportDict,
    /// Print the effective config as JSON.
    Config,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::profile(&cli.profile)?,
    };
    for w in cfg.validate()? {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn method(cli: &Cli) -> Result<Option<Method>, Error> {
    cli.method.as_deref().map(str::parse).transpose()
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(Error::from)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let mut cfg = load_config(cli)?;
    match &cli.command {
        Command::Config => {
            print!("{}", cfg.to_json());
            println!();
        }
        Command::Verify => {
            let checks = run_checks(&cfg, cli.seed.unwrap_or(1))?;
            let mut failed = 0;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                failed += usize::from(!c.passed);
            }
            if failed > 0 {
                return Err(Error::DegenerateInput(format!("{failed} of {} checks failed", checks.len())));
            }
            println!("all {} checks passed", checks.len());
        }
        Command::Simulate => {
            let m = method(cli)?.unwrap_or(Method::ProposedSbl);
            let seed = cli.seed.unwrap_or(1);
            let exp = Experiment::new(&cfg)?;
            let rep = simulate(&exp, m, seed, cli.snr_db)?;
            std::fs::create_dir_all(&cli.out)?;
            write(&cli.out.join("simulate.json"), &rep.to_json())?;
            save_matrix(&cli.out.join("h_true.nfm"), &rep.h, exp.model.wavelength)?;
            save_matrix(&cli.out.join("h_hat.nfm"), &rep.h_hat, exp.model.wavelength)?;
            print!("{m}: NMSE {:.2} dB", rep.nmse_db);
            if let Some(e) = rep.location_error_m {
                print!(", location error {e:.4} m");
            }
            println!(" -> {}", cli.out.display());
        }
        Command::Sweep { trials, threads } => {
            if let Some(m) = method(cli)? {
                cfg.sweep.methods = vec![m];
            }
            if let Some(s) = cli.snr_db {
                cfg.sweep.snr_db = vec![s];
            }
            if let Some(seed) = cli.seed {
                cfg.sweep.base_seed = seed;
            }
            if let Some(t) = trials {
                cfg.sweep.trials = *t;
            }
            if let Some(t) = threads {
                cfg.sweep.threads = *t;
            }
            cfg.validate()?;
            let table = run_sweep(&cfg)?;
            std::fs::create_dir_all(&cli.out)?;
            write(&cli.out.join("results.csv"), &table.to_csv())?;
            write(&cli.out.join("results.json"), &table.to_json())?;
            for a in &table.aggregates {
                let rmse = a.rmse_m.map(|r| format!("  RMSE {r:.3} m")).unwrap_or_default();
                println!("{:<26} {:>6} dB  NMSE {:>8.2} dB{rmse}", a.method.to_string(), a.snr_db, a.nmse_db);
            }
            eprint!("{}", table.failure_report());
            println!("-> {}", cli.out.display());
        }
        Command::ExportDict => {
            let model = cfg.model()?;
            for p in export_dictionaries(&model, &cli.out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
