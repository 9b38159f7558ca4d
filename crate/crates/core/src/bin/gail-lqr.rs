use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gail_lqr::harness::{self, output, Experiment, ExperimentConfig, OutputFormat, EXIT_CONFIG};
use gail_lqr::GailError;

#[derive(Parser)]
#[command(
    name = "gail-lqr",
    about = "Adversarial imitation learning for LQR: solve, check and diagnose"
)]
struct Cli {
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Random instance written to <out>/instance.json.
    Gen {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        k: usize,
        /// Spectral radius of A.
        #[arg(long, default_value_t = 0.9)]
        rho: f64,
    },
    /// Expert gain for the config's theta_tilde.
    Expert { config: PathBuf },
    /// Run the solver; writes the trace and summary.json.
    Solve { config: PathBuf },
    /// Stepsize condition verdicts.
    Check { config: PathBuf },
    /// Trace monitors for a saved trace (CSV traces are replayed).
    Diag { trace: PathBuf, config: PathBuf },
    /// Solve several configs in parallel into <out>/<config stem>/.
    Batch { configs: Vec<PathBuf> },
}

fn load(path: &PathBuf, seed: Option<u64>) -> Result<ExperimentConfig, GailError> {
    let mut c = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        c.seed = s;
    }
    Ok(c)
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<(), GailError> {
    println!("{}", output::to_json_string(v)?);
    Ok(())
}

fn run(cli: Cli) -> Result<i32, GailError> {
    let fmt: OutputFormat = cli.format.into();
    match cli.cmd {
        Cmd::Gen { d, k, rho } => {
            let path = harness::cmd_gen(d, k, rho, cli.seed.unwrap_or(0), &cli.out)?;
            println!("{}", path.display());
            Ok(0)
        }
        Cmd::Expert { config } => {
            let r = harness::cmd_expert(&load(&config, cli.seed)?)?;
            print_json(&r)?;
            Ok(0)
        }
        Cmd::Solve { config } => {
            let exp = Experiment::build(load(&config, cli.seed)?)?;
            let r = harness::cmd_solve(&exp, &cli.out, fmt)?;
            eprintln!(
                "eta = {:.6e}, lambda = {:.6e}, iterations = {}, final |L| = {:.3e}, |K - K_E| = {:.3e}",
                r.steps.eta,
                r.steps.lambda,
                r.outcome.trace.len() - 1,
                r.summary.final_prox_grad_norm,
                r.summary.final_k_error
            );
            Ok(r.exit_code)
        }
        Cmd::Check { config } => {
            let exp = Experiment::build(load(&config, cli.seed)?)?;
            let r = harness::cmd_check(&exp)?;
            std::fs::create_dir_all(&cli.out)?;
            output::write_json(&cli.out.join("check.json"), &r)?;
            match fmt {
                OutputFormat::Json => print_json(&r)?,
                OutputFormat::Csv => {
                    println!("eta = {:.6e}, lambda = {:.6e}", r.eta, r.lambda);
                    print!("{}", output::format_verdicts(&r.verdicts));
                }
            }
            Ok(if r.all_pass() { 0 } else { EXIT_CONFIG })
        }
        Cmd::Diag { trace, config } => {
            let exp = Experiment::build(load(&config, cli.seed)?)?;
            let r = harness::cmd_diag(&exp, &trace)?;
            std::fs::create_dir_all(&cli.out)?;
            output::write_json(&cli.out.join("diag.json"), &r)?;
            print_json(&r)?;
            Ok(0)
        }
        Cmd::Batch { configs } => {
            let entries = harness::cmd_batch(&configs, &cli.out, fmt, cli.seed);
            for e in &entries {
                match (&e.summary, &e.error) {
                    (Some(s), _) => println!(
                        "{}\texit {}\t|L| = {:.3e}\t|K - K_E| = {:.3e}",
                        e.config.display(),
                        e.exit_code,
                        s.final_prox_grad_norm,
                        s.final_k_error
                    ),
                    (None, Some(err)) => {
                        println!("{}\texit {}\t{err}", e.config.display(), e.exit_code)
                    }
                    _ => {}
                }
            }
            Ok(entries.iter().map(|e| e.exit_code).max().unwrap_or(0))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(harness::error_exit_code(&e) as u8)
        }
    }
}
