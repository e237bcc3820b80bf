use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use dpg_cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match cli.into_config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let report = match run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    print!("{}", report.to_text());
    let path = cfg.out_json.clone().unwrap_or_else(|| PathBuf::from("dpg_report.json"));
    if let Err(e) = report.write_json(&path) {
        eprintln!("error: writing {}: {e}", path.display());
        return ExitCode::from(1);
    }
    log::info!("report written to {}", path.display());
    if report.all_converged() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
