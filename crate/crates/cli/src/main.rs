use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use ergwalk_cli::config::ExperimentConfig;
use ergwalk_cli::runner::{estimated_steps, run_and_write, version};

#[derive(Parser)]
#[command(name = "ergwalk", version, about = "Random walks on lattice and translation-surface spaces")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory (overrides ERGWALK_OUT and output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config file and print the effective settings.
    Validate {
        config: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
    },
}

fn load(path: &PathBuf, seed: Option<u64>) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::load(path).map_err(|e| e.to_string())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Validate { config, seed_override } => match load(&config, seed_override) {
            Ok(cfg) => {
                println!("ok");
                println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
                println!("estimated group actions: {}", estimated_steps(&cfg));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Cmd::Run {
            config,
            seed_override,
            threads,
            out,
        } => {
            let cfg = match load(&config, seed_override) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            let start = Instant::now();
            let job = || run_and_write(&cfg, out.as_deref(), seed_override.is_some());
            let res = match threads {
                Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
                    Ok(pool) => pool.install(job),
                    Err(e) => {
                        eprintln!("error: thread pool: {e}");
                        return ExitCode::from(1);
                    }
                },
                None => job(),
            };
            match res {
                Ok(w) => {
                    eprintln!(
                        "{} {}: {:?} in {:.2} s, report {}",
                        version(),
                        cfg.experiment.name(),
                        w.verdict,
                        start.elapsed().as_secs_f64(),
                        w.report.display()
                    );
                    ExitCode::from(w.verdict.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
