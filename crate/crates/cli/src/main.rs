use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gscale::error::{quote, CliError};
use gscale::scan::{self, Mode, ScanConfig};
use gscale::simulate;
use gscale_core::bench::{self, BenchTable};

/// Worker thread count; defaults to all cores.
const THREADS_ENV: &str = "GSCALE_THREADS";

#[derive(Parser)]
#[command(name = "gscale", version, about = "Generalized scale, location and joint tests for variance heterogeneity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run per-variant tests on phenotype and genotype files.
    Test {
        #[arg(long)]
        pheno: PathBuf,
        #[arg(long)]
        geno: PathBuf,
        /// indicator, prob or best-guess.
        #[arg(long, default_value = "indicator")]
        mode: String,
        /// Comma-separated: gL, gS_OLS, gS_LAD, TW_OLS, TW_LAD, gJLS, Lev_OLS, Lev_LAD.
        #[arg(long, default_value = "gL,gS_LAD,gJLS")]
        tests: String,
        /// Phenotype column holding cluster labels.
        #[arg(long)]
        cluster: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Within-strata permutations per variant for empirical p-values.
        #[arg(long, default_value_t = 0)]
        permutations: usize,
    },
    /// Generate a data set from simulation model 1 or 2.
    Simulate {
        #[arg(long)]
        model: u8,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Regenerate a type 1 error or power table.
    Bench {
        /// T1, T1L, T2, T3, T4 or RE.
        #[arg(long)]
        table: String,
        #[arg(long, default_value_t = 2000)]
        replicates: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("{THREADS_ENV}=`{raw}` is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn info(fields: &str) {
    eprintln!("level=info {fields}");
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Test {
            pheno,
            geno,
            mode,
            tests,
            cluster,
            out,
            seed,
            permutations,
        } => {
            let cfg = ScanConfig {
                pheno,
                geno,
                mode: mode.parse::<Mode>()?,
                tests: scan::parse_tests(&tests)?,
                cluster,
                out,
                seed,
                permutations,
            };
            let s = scan::run_scan(&cfg)?;
            info(&format!(
                "event=scan variants={} skipped={} failed_tests={} phenotypes={} out={}",
                s.variants,
                s.skipped,
                s.failed_tests,
                s.n_pheno,
                quote(&cfg.out.display().to_string())
            ));
            if let Some(f) = s.first_failure {
                return Err(CliError::Numerical(f));
            }
        }
        Command::Simulate {
            model,
            config,
            out_prefix,
        } => {
            let w = simulate::run_simulate(model, &config, &out_prefix)?;
            info(&format!(
                "event=simulate pheno={} geno={}",
                quote(&w.pheno.display().to_string()),
                quote(&w.geno.display().to_string())
            ));
        }
        Command::Bench {
            table,
            replicates,
            seed,
            out,
        } => {
            let table: BenchTable = table.parse().map_err(CliError::Config)?;
            if replicates < 100 {
                return Err(CliError::Config(format!(
                    "replicates must be at least 100, got {replicates}"
                )));
            }
            let cells = bench::run_table(table, replicates, seed)
                .map_err(|e| CliError::Config(e.0))?;
            let file = std::fs::File::create(&out).map_err(|e| CliError::io(&out, e))?;
            bench::write_tsv(table, &cells, std::io::BufWriter::new(file))
                .map_err(|e| CliError::io(&out, e))?;
            info(&format!(
                "event=bench table={table} cells={} out={}",
                cells.len(),
                quote(&out.display().to_string())
            ));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("level=error kind=usage code=2 message={}", quote(first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
