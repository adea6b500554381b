use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use trfe_cli::config::resolve;
use trfe_cli::experiment::run_experiment;
use trfe_cli::{oracle, plot};

const RUNTIME_FAILURE: u8 = 1;
const CONFIG_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "trfe", version, about = "Lower bounds on partially observed control cost")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a sensor-noise sweep.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; falls back to the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// N = 5000 rollouts and 500 LQG episodes.
        #[arg(long)]
        desk_scale: bool,
        /// Do not cap the inverse-temperature grid at the convexity ceiling.
        #[arg(long)]
        no_certify: bool,
    },
    /// Render a sweep CSV as SVG.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the linear-Gaussian sandwich suite.
    Oracle,
}

fn set_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("TRFE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("TRFE_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = set_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(CONFIG_ERROR);
    }
    match cli.cmd {
        Cmd::Run {
            config,
            out,
            desk_scale,
            no_certify,
        } => {
            let raw = match std::fs::read_to_string(&config) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(CONFIG_ERROR);
                }
            };
            let seed = std::env::var("TRFE_SEED").ok();
            let cfg = match resolve(&raw, desk_scale, no_certify, seed.as_deref()) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {}: {e}", config.display());
                    return ExitCode::from(CONFIG_ERROR);
                }
            };
            let Some(out) = out.or_else(|| cfg.output_dir.clone().map(PathBuf::from)) else {
                eprintln!("error: no output directory: pass --out or set output_dir");
                return ExitCode::from(CONFIG_ERROR);
            };
            match run_experiment(&cfg, &out) {
                Ok(s) if s.failed == 0 => {
                    println!("{}: {} rows written, {} already present", s.csv.display(), s.written, s.skipped);
                    ExitCode::SUCCESS
                }
                Ok(s) => {
                    eprintln!("{} of {} rows failed; see the errors column of {}", s.failed, s.written, s.csv.display());
                    ExitCode::from(RUNTIME_FAILURE)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(RUNTIME_FAILURE)
                }
            }
        }
        Cmd::Plot { input, out } => match plot::render_file(&input, &out) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(RUNTIME_FAILURE)
            }
        },
        Cmd::Oracle => match oracle::sandwich_suite(&[0, 1, 2, 3, 4]) {
            Ok(cases) => {
                println!("kind      seed  sigma_v     J_irr_ol        J_sc          J*       J_lqg   ok");
                for c in &cases {
                    println!(
                        "{:<9} {:>4} {:>8.4} {:>12.5} {:>11.5} {:>11.5} {:>11.5}   {}",
                        format!("{:?}", c.kind),
                        c.seed,
                        c.sigma_v,
                        c.j_irr_ol,
                        c.j_sc,
                        c.j_star,
                        c.j_lqg,
                        if c.holds() { "yes" } else { "NO" }
                    );
                }
                if cases.iter().all(|c| c.holds()) {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(RUNTIME_FAILURE)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(RUNTIME_FAILURE)
            }
        },
    }
}
