use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;

use dps_core::config::{RunConfig, SweepSpec};
use dps_core::runner::{execute, summary_table};

/// Simulate a differential phase shift QKD link and write run artifacts.
#[derive(Debug, Parser)]
#[command(name = "dps-sim", version)]
struct Args {
    /// TOML configuration file. Defaults are used when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Root seed, overriding `run.seed`.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Number of pulses, overriding `run.n_pulses`.
    #[arg(long, value_name = "N")]
    pulses: Option<usize>,

    /// Parameter sweep, e.g. `fiber.length=0,25,50`.
    #[arg(long, value_name = "KEY=V1,V2,...")]
    sweep: Option<String>,

    /// Output directory, overriding `run.output_dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Also write the spectrum of Alice's output.
    #[arg(long)]
    emit_spectrum: bool,

    /// Print the reference configuration and exit.
    #[arg(long)]
    emit_default_config: bool,
}

fn parse_sweep(spec: &str) -> Result<SweepSpec> {
    let (key, values) = spec
        .split_once('=')
        .with_context(|| format!("sweep `{spec}` must look like KEY=V1,V2,..."))?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad sweep value `{v}`")))
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        bail!("sweep `{spec}` has no values");
    }
    Ok(SweepSpec {
        parameter: key.trim().to_string(),
        values,
    })
}

fn run(args: Args) -> Result<()> {
    if args.emit_default_config {
        print!("{}", RunConfig::reference_toml());
        return Ok(());
    }
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(n) = args.pulses {
        cfg.run.n_pulses = n;
    }
    if let Some(s) = args.seed {
        cfg.run.seed = s;
    }
    if let Some(out) = &args.out {
        cfg.run.output_dir = out.display().to_string();
    }
    if let Some(spec) = &args.sweep {
        cfg.sweep = Some(parse_sweep(spec)?);
    }
    cfg.validate().context("invalid configuration")?;
    let out_dir = PathBuf::from(&cfg.run.output_dir);
    let results = execute(&cfg, cfg.run.seed, &out_dir, args.emit_spectrum).context("run failed")?;
    print!("{}", summary_table(&results));
    println!("artifacts written to {}", out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
