use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use bohmlab::cli::{self, ConfigError, Formats};

/// Run a pilot-wave experiment described by a configuration file.
#[derive(Debug, Parser)]
#[command(name = "bohmlab", version)]
struct Args {
    /// Experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Output formats, overriding `run.formats` (e.g. `csv,json`).
    #[arg(long)]
    format: Option<Formats>,
    /// Worker threads. Affects speed only.
    #[arg(long)]
    threads: Option<usize>,
}

fn fail(kind: &str, message: String, details: Vec<serde_json::Value>, code: u8) -> ExitCode {
    let report = json!({ "error": { "kind": kind, "message": message, "details": details } });
    eprintln!("{report}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();

    if let Some(n) = args.threads {
        if n == 0 {
            return fail("usage", "--threads must be at least 1".into(), Vec::new(), 2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail("usage", format!("cannot build thread pool: {e}"), Vec::new(), 2);
        }
    }

    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => return fail("io", format!("cannot read {}: {e}", args.config.display()), Vec::new(), 2),
    };
    let mut config = match cli::parse_config(&text) {
        Ok(c) => c,
        Err(errors) => {
            let details = errors
                .iter()
                .map(|e: &ConfigError| serde_json::to_value(e).expect("errors serialize"))
                .collect();
            let message = errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
            return fail("config", message, details, 2);
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(f) = args.format {
        config.formats = f;
    }

    match cli::run(&config, &args.out, args.threads) {
        Ok(report) => {
            for f in &report.files {
                println!("{}", f.display());
            }
            if report.checks_passed {
                ExitCode::SUCCESS
            } else {
                log::warn!("some checks did not pass; see summary");
                ExitCode::from(3)
            }
        }
        Err(e) => fail(e.kind(), e.to_string(), Vec::new(), 1),
    }
}
