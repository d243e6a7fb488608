use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use horolab::experiments::EXPERIMENTS;
use horolab::{run_file, verify};

fn experiment_help() -> String {
    let mut s = String::from("Experiments:\n");
    for (name, pipeline) in EXPERIMENTS {
        s.push_str(&format!("  {name:<20} {pipeline}\n"));
    }
    s.push_str("\nExit status: 0 pass, 1 property failure, 2 configuration or solver error.");
    s
}

#[derive(Parser)]
#[command(name = "horolab", version, about = "Horospherical and Jacobi-tensor experiments on model Riemannian manifolds", after_help = experiment_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output.path`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// List experiment names and the pipeline each runs.
    ListExperiments,
    /// Run the acceptance suite and print one line per criterion.
    VerifyPaper {
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn threads(jobs: Option<usize>) -> Result<(), String> {
    match jobs {
        Some(0) => Err("--jobs must be at least 1".into()),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string()),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListExperiments => {
            for (name, pipeline) in EXPERIMENTS {
                println!("{name}\t{pipeline}");
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, out, jobs } => {
            if let Err(e) = threads(jobs) {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            match run_file(&config, out.as_deref()) {
                Ok((report, written)) => {
                    for p in &written {
                        eprintln!("wrote {}", p.display());
                    }
                    let s = &report.summary;
                    eprintln!(
                        "{}: {} (max deviation {:e}, {} ms)",
                        report.experiment,
                        if s.pass { "pass" } else { "FAIL" },
                        s.max_deviation,
                        s.runtime_ms
                    );
                    for f in &s.failures {
                        eprintln!("  {f}");
                    }
                    ExitCode::from(report.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Command::VerifyPaper { jobs } => {
            if let Err(e) = threads(jobs) {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            let start = std::time::Instant::now();
            let mut pass = true;
            for c in verify::all() {
                println!("{c}");
                pass &= c.pass;
            }
            println!("verify-paper {} in {:.1} s", if pass { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
