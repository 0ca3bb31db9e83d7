use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hybridsos::io::{parse_box, parse_problem, run, write_outputs, FileError, Overrides};
use hybridsos::Family;

/// Samples parameter points, solves the hybrid moment relaxation at each and
/// writes the verified efficient points.
#[derive(Debug, Parser)]
#[command(name = "hybridsos", version, about)]
struct Args {
    /// Problem file (JSON).
    #[arg(long)]
    problem: PathBuf,
    /// Relaxation family.
    #[arg(long, value_parser = parse_family)]
    family: Option<Family>,
    /// Highest relaxation order (default k0 + 3).
    #[arg(long)]
    k_max: Option<usize>,
    /// Number of sampled parameter points.
    #[arg(long)]
    samples: Option<usize>,
    /// Seed of the box sampler.
    #[arg(long)]
    seed: Option<u64>,
    /// Sampling box, e.g. "0,4;0,4".
    #[arg(long = "box", value_name = "LO,HI;...")]
    bounds: Option<String>,
    /// Relative duality gap tolerance.
    #[arg(long)]
    tol_gap: Option<f64>,
    /// Relative eigenvalue cutoff for rank decisions.
    #[arg(long)]
    tol_rank: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write certificates.json.
    #[arg(long)]
    emit_certificates: bool,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Record wall-clock timestamps in results.json (makes output run-dependent).
    #[arg(long)]
    record_time: bool,
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: hybridsos::Error| e.to_string())
}

fn execute(args: &Args) -> Result<(), FileError> {
    let file = parse_problem(&args.problem)?;
    let ov = Overrides {
        family: args.family,
        k_max: args.k_max,
        samples: args.samples,
        seed: args.seed,
        bounds: args.bounds.as_deref().map(parse_box).transpose()?,
        tol_gap: args.tol_gap,
        tol_rank: args.tol_rank,
        workers: args.workers,
        emit_certificates: args.emit_certificates,
    };
    let (bundle, result) = run(&file, &ov, args.record_time)?;
    let written = write_outputs(&bundle, &args.out)?;
    log::info!(
        "{} parameter points, {:.1}% verified, {} efficient, {} unverified",
        result.zs.len(),
        100.0 * result.verified_fraction(),
        result.efficient.len(),
        result.unverified.len()
    );
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
