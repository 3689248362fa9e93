use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use holodisc::pipeline::{self, Outcome, RunOptions};

#[derive(Parser)]
#[command(name = "holodisc", version, about = "Minimal Lagrangian-boundary discs and their partial Maslov indices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed recorded in every run record.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 1 gives byte-identical reports across reruns.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory for records, reports and CSV artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario at its base mesh size.
    Run { file: PathBuf },
    /// Run a scenario at several refinement levels (level ℓ uses h/2^ℓ).
    Sweep {
        file: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        levels: Option<Vec<u32>>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let opts = RunOptions { out: cli.out, seed: cli.seed };
    let outcome = match cli.command {
        Command::Run { file } => match pipeline::run(&file, &opts) {
            Ok(rec) => {
                print!("{}", pipeline::format_report(&rec));
                rec.outcome
            }
            Err(e) => {
                eprintln!("error: {e}");
                Outcome::Error
            }
        },
        Command::Sweep { file, levels } => match pipeline::sweep(&file, levels.as_deref(), &opts) {
            Ok(records) => {
                for r in &records {
                    let kappas = r.indices.as_ref().map(|i| format!("{:?}", i.kappas)).unwrap_or_else(|| "-".into());
                    println!("level {} h {:.4e} outcome {:?} kappas {}", r.level, r.h, r.outcome, kappas);
                    if let Some(e) = &r.error {
                        eprintln!("level {}: {e}", r.level);
                    }
                }
                pipeline::sweep_outcome(&records)
            }
            Err(e) => {
                eprintln!("error: {e}");
                Outcome::Error
            }
        },
    };
    ExitCode::from(outcome.exit_code() as u8)
}
