use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use greenlab::{error_exit_code, run_experiment, Error, ExperimentConfig, ExperimentKind};

/// Run one greenlab experiment and write its report.
#[derive(Parser, Debug)]
#[command(name = "greenlab", version = greenlab::report::VERSION)]
struct Cli {
    /// One of: solve, green-decay, symmetry, representation, caccioppoli,
    /// reverse-holder, bogovskii, infsup, vmo-modulus, a1-probe, a2-probe, lq-sweep.
    experiment: String,
    /// TOML or JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's output_dir, else ./reports).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn threads_from_env() -> Result<(), Error> {
    let Ok(v) = std::env::var("GREENLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(vec![format!("GREENLAB_THREADS must be a positive integer, got '{v}'")]))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(vec![format!("cannot size thread pool: {e}")]))
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let kind: ExperimentKind = cli.experiment.parse()?;
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    match cfg.experiment {
        Some(k) if k != kind => {
            return Err(Error::Config(vec![format!(
                "command line asks for '{kind}' but the config declares '{k}'"
            )]))
        }
        _ => cfg.experiment = Some(kind),
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fail(e: &Error) -> ExitCode {
    match e {
        Error::Config(list) => {
            eprintln!("error: invalid configuration");
            for item in list {
                eprintln!("  - {item}");
            }
        }
        other => eprintln!("error: {other}"),
    }
    ExitCode::from(error_exit_code(e) as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = threads_from_env() {
        return fail(&e);
    }
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("reports"));
    let provenance = vec![format!("config: {}", cli.config.display())];
    let outcome = match run_experiment(&cfg, &out, provenance) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    let status = outcome.status();
    println!("{} [{}] seed={} status={:?}", outcome.report.name, &outcome.report.config_hash[..16], cfg.seed, status);
    for (k, v) in &outcome.report.metrics {
        println!("  {k} = {v:e}");
    }
    for w in &outcome.log.warnings {
        eprintln!("warning: {w}");
    }
    for f in outcome.log.solver_failures.iter().chain(&outcome.log.failures) {
        eprintln!("failure: {f}");
    }
    println!("report: {}", outcome.paths.json.display());
    println!("table:  {}", outcome.paths.csv.display());
    ExitCode::from(status.exit_code() as u8)
}
