use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hardyheat_cli::compare::compare_files;
use hardyheat_cli::{catalog, run, RunOptions};

#[derive(Debug, Parser)]
#[command(
    name = "hardyheat",
    version,
    about = "Experiment runner for singular Schrödinger operators on stratified domains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Execute the tasks of an experiment config.
    Run {
        config: PathBuf,
        /// Validate the config without computing.
        #[arg(long)]
        dry_run: bool,
        /// Number of tasks executed concurrently.
        #[arg(long, value_name = "N")]
        jobs: Option<usize>,
        /// Write the assembled matrices in coordinate format.
        #[arg(long)]
        dump_matrices: bool,
        /// Override the config seed.
        #[arg(long, value_name = "S")]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Relative differences between the scalar fields of two reports.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Largest relative difference treated as equal.
        #[arg(long, default_value_t = 0.0)]
        rtol: f64,
    },
    /// List catalog potentials with their predicted exponents.
    Catalog {
        /// Ambient dimension.
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, dry_run, jobs, dump_matrices, seed, out } => {
            let opts = RunOptions { dry_run, jobs, dump_matrices, seed, out };
            match run(&config, &opts) {
                Ok(summary) => {
                    if dry_run {
                        println!("{}: config ok", config.display());
                    } else {
                        for (id, status) in &summary.tasks {
                            println!("{id}: {}", serde_json::to_string(status).unwrap_or_default().trim_matches('"'));
                        }
                        if let Some(dir) = &summary.out_dir {
                            println!("report written to {}", dir.display());
                        }
                    }
                    ExitCode::from(summary.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Compare { a, b, rtol } => match compare_files(&a, &b, rtol) {
            Ok(cmp) => {
                for d in &cmp.diffs {
                    match d.relative {
                        Some(r) => println!("{}: {} vs {} (relative {r:.3e})", d.path, d.a, d.b),
                        None => println!("{}: {} vs {}", d.path, d.a, d.b),
                    }
                }
                println!(
                    "{} fields compared, {} differ, max relative difference {:.3e}",
                    cmp.compared,
                    cmp.diffs.len(),
                    cmp.max_relative
                );
                if cmp.is_clean() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Command::Catalog { dim, json } => match catalog::catalog(dim) {
            Ok(entries) => {
                if json {
                    println!("{}", serde_json::to_string_pretty(&entries).unwrap_or_default());
                } else {
                    print!("{}", catalog::render(&entries));
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
