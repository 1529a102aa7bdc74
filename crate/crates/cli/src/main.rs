use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nhgeo_cli::{run, Command, Format, Overrides};

#[derive(Parser)]
#[command(name = "nhgeo", version, about = "Normal sub-Riemannian geodesics in moving frames")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// JSON run configuration
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output file (stdout when omitted)
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Model id, e.g. heisenberg_a, free_3, contact5:exp_x1
    #[arg(long, global = true, value_name = "ID")]
    model: Option<String>,
    /// Comma separated coordinates
    #[arg(long, global = true, value_name = "V1,V2,...", allow_hyphen_values = true)]
    point: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Verb {
    /// Integrate the extremal system and emit the trajectory
    Integrate,
    /// Frame system against the coordinate Hamiltonian flow
    Compare,
    /// Distance of penalized runs to the delta = 0 run
    SweepDelta,
    /// Canonical splitting at a point
    Split,
    /// Connection and torsion blocks at a point
    Torsion,
}

const LEVELS: [&str; 4] = ["error", "warn", "info", "debug"];

fn init_log() {
    let raw = std::env::var("NHGEO_LOG").ok();
    let level = match raw.as_deref().map(str::trim) {
        Some(v) if LEVELS.contains(&v.to_ascii_lowercase().as_str()) => v.to_ascii_lowercase(),
        _ => "warn".to_string(),
    };
    env_logger::Builder::new().parse_filters(&level).format_timestamp(None).target(env_logger::Target::Stderr).init();
    if let Some(v) = raw.filter(|v| !LEVELS.contains(&v.trim().to_ascii_lowercase().as_str())) {
        log::warn!("NHGEO_LOG={v:?} not one of error|warn|info|debug; using warn");
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_log();
    let cmd = match cli.verb {
        Verb::Integrate => Command::Integrate,
        Verb::Compare => Command::Compare,
        Verb::SweepDelta => Command::SweepDelta,
        Verb::Split => Command::Split,
        Verb::Torsion => Command::Torsion,
    };
    let ov = Overrides { config: cli.config, out: cli.out, format: cli.format, model: cli.model, point: cli.point };
    match run(cmd, &ov) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nhgeo: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
