use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dinilab_cli::{list_catalog, run, Overrides};

#[derive(Parser)]
#[command(
    name = "dinilab",
    version,
    about = "Run mean-oscillation and elliptic regularity experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Directory for reports (overrides the config file).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized sampling (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Exit with status 4 when the experiment's acceptance check fails.
    #[arg(long, global = true)]
    check: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run { config: PathBuf },
    /// List experiments, fields, data and configuration keys.
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("thread pool starts once");
    }
    match cli.command {
        Command::List => {
            print!("{}", list_catalog());
            ExitCode::SUCCESS
        }
        Command::Run { config } => {
            let overrides = Overrides {
                output_dir: cli.output_dir,
                seed: cli.seed,
            };
            match run(&config, &overrides) {
                Ok(summary) => {
                    println!(
                        "wrote {} files to {}",
                        summary.files.len(),
                        summary.output_dir.display()
                    );
                    println!(
                        "check: {} ({})",
                        if summary.check_passed { "pass" } else { "fail" },
                        summary.check_detail
                    );
                    if cli.check && !summary.check_passed {
                        return ExitCode::from(4);
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
