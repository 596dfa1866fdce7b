use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmbo::experiment::{parse_config, run_experiment, run_sweep, ExperimentConfig};

#[derive(Parser)]
#[command(name = "mmbo", version, about = "Multi-block min-max bilevel optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment; writes trace.csv and summary.json.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the [sweep] grid of a synthetic experiment.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the built-in derivative, estimator and metric checks.
    Verify,
}

#[derive(Args)]
struct Overrides {
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optimizer seed (overrides the run or trainer `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Trace cadence (overrides `record_every`).
    #[arg(long)]
    record_every: Option<u64>,
}

fn load(path: &Path, o: &Overrides) -> mmbo::Result<ExperimentConfig> {
    let mut cfg = parse_config(path)?;
    if let Some(dir) = path.parent() {
        cfg.rebase(dir);
    }
    if let Some(out) = &o.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = o.seed {
        cfg.set_run_seed(seed);
    }
    if let Some(n) = o.record_every {
        cfg.record_every = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3e}"))
}

fn cmd_run(path: &Path, o: &Overrides) -> mmbo::Result<bool> {
    let cfg = load(path, o)?;
    let s = run_experiment(&cfg)?;
    println!("status: {:?}", s.status);
    println!("iterations: {}", s.iterations);
    if s.final_stationarity.is_some() {
        println!("final stationarity (running min): {}", fmt_opt(s.final_stationarity));
        match s.iterations_to_threshold {
            Some(t) => println!("iterations to {:.0e}: {t}", s.threshold),
            None => println!("iterations to {:.0e}: not reached", s.threshold),
        }
    }
    if let Some(m) = s.final_metric {
        println!("final metric: {m:.4}");
    }
    if let Some(e) = &s.error {
        eprintln!("error: {e}");
    }
    println!("outputs in {}", cfg.output_dir.display());
    Ok(s.succeeded())
}

fn cmd_sweep(path: &Path, o: &Overrides) -> mmbo::Result<bool> {
    let cfg = load(path, o)?;
    let out = run_sweep(&cfg)?;
    println!("block_batch data_batch seeds failed censored mean_iters std_iters");
    for c in &out.cells {
        println!(
            "{:>11} {:>10} {:>5} {:>6} {:>8} {:>10} {:>9}",
            c.block_batch,
            c.data_batch,
            c.seeds,
            c.failed,
            c.censored,
            c.mean_iterations.map_or("n/a".into(), |m| format!("{m:.1}")),
            c.std_iterations.map_or("n/a".into(), |m| format!("{m:.1}")),
        );
    }
    println!("outputs in {}", cfg.output_dir.display());
    Ok(!out.any_failed())
}

fn cmd_verify() -> bool {
    let checks = mmbo::verify::run_checks();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    checks.iter().all(|c| c.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, overrides } => cmd_run(config, overrides),
        Command::Sweep { config, overrides } => cmd_sweep(config, overrides),
        Command::Verify => Ok(cmd_verify()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
