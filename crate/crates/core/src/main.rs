use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fracvar::cli::{
    is_config_error, output_dir, parse_config, record_config_error, run_command, thread_count,
    Command, THREADS_ENV,
};

/// Variational solvers for the quasilinear fractional Dirichlet problem.
#[derive(Debug, Parser)]
#[command(name = "fracvar", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (falls back to FRACVAR_THREADS).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::init();
    let args = Args::parse();
    let env = std::env::var(THREADS_ENV).ok();
    let threads = match thread_count(args.threads, env.as_deref()) {
        Ok(k) => k,
        Err(e) => {
            eprintln!("fracvar: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(k) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
        {
            eprintln!("fracvar: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let cfg = match parse_config(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("fracvar: {e}");
            if let Some(out) = &args.out {
                let _ = record_config_error(out, args.command, &e);
            }
            return ExitCode::from(if is_config_error(&e) { 2 } else { 1 });
        }
    };
    let out = output_dir(&cfg, args.out.as_deref());
    match run_command(&cfg, args.command, &out) {
        Ok(manifest) => {
            if let Some(e) = &manifest.error {
                eprintln!("fracvar: {e}");
            }
            log::info!(
                "wrote {} files to {}",
                manifest.outputs.len(),
                out.display()
            );
            println!(
                "{}",
                serde_json::to_string(&manifest.summary).unwrap_or_default()
            );
            ExitCode::from(manifest.status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("fracvar: {e}");
            ExitCode::from(1)
        }
    }
}
