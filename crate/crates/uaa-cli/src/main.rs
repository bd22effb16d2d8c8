use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use uaa_cli::config::parse_config;
use uaa_cli::experiment::{bench_experiment, load_trace, run_experiment, summary_table};
use uaa_cli::rate::{verify_rate, RateOptions, RateVerdict, DEFAULT_GAP_FLOOR};

/// Adaptive accelerated regularized solvers: experiment runner and
/// convergence-rate verifier.
#[derive(Parser)]
#[command(name = "uaa", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file and write one trace CSV
    /// per (method, repetition) plus summary.csv.
    ///
    /// Config format: one `key = value` per line, `#` starts a comment.
    /// Keys: problem (quadratic | logistic-l2 | logistic-l1 | logsumexp |
    /// dataset), n, d, terms, lambda, dataset_path, regularizer (l2 | l1),
    /// methods (comma list of uaa-p1 | uaa-p2-exact | uaa-p2-inexact |
    /// uaa-p3 | aarc | arc | agd | fista), out_dir, seed, start_seed, repetitions,
    /// start_scale, fstar. Per-method overrides use dotted keys, e.g.
    /// `uaa-p2-exact.eta = 1e-3`, `arc.grad_tol = 1e-8`, `agd.l0 = 1`.
    /// The UAA_OUT_DIR environment variable overrides out_dir.
    Run {
        /// Path to the experiment config file.
        config: PathBuf,
    },
    /// Fit the empirical gap-decay slope of solver traces and check the
    /// sigma/tau bookkeeping. Exits 2 when any trace fails verification.
    Verify(VerifyArgs),
    /// Run a multi-method comparison and emit a merged bench.csv with one
    /// column group per method (objective, stationarity, cumulative time).
    Bench {
        /// Path to the experiment config file.
        config: PathBuf,
    },
}

#[derive(Args)]
struct VerifyArgs {
    /// Trace CSV files produced by `run`.
    #[arg(required = true)]
    traces: Vec<PathBuf>,
    /// Model order p; the expected gap decay is j^-(p+1).
    #[arg(long)]
    p: usize,
    /// Inclusive window of successful-iteration indices to fit, as LO,HI.
    #[arg(long, value_delimiter = ',')]
    window: Option<Vec<usize>>,
    /// Slack added to the theoretical slope -(p+1) for the pass test.
    #[arg(long, default_value_t = 0.3)]
    slack: f64,
    /// Optimal objective value; default is the best F seen in each trace.
    #[arg(long)]
    fstar: Option<f64>,
    /// Complexity-bound constant C for the pointwise check
    /// gap_j <= C / prod_{l=1..p+1}(j+l); requires --fstar.
    #[arg(long)]
    cbound: Option<f64>,
    /// Gaps below this floor are excluded from the fit.
    #[arg(long, default_value_t = DEFAULT_GAP_FLOOR)]
    gap_floor: f64,
    /// Sigma increase factor used by the run (discipline check).
    #[arg(long, default_value_t = 2.0)]
    gamma1: f64,
    /// Sigma increase ceiling used by the run (discipline check).
    #[arg(long, default_value_t = 3.0)]
    gamma2: f64,
    /// Sigma floor used by the run (discipline check).
    #[arg(long, default_value_t = 1e-8)]
    sigma_min: f64,
}

fn cmd_run(config_path: &PathBuf) -> Result<()> {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading config {}", config_path.display()))?;
    let config = parse_config(&text)?;
    let output = run_experiment(&config)?;
    print!("{}", summary_table(&output));
    println!("traces written to {}", output.out_dir.display());
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<bool> {
    let mut opts = RateOptions::new(args.p);
    if let Some(w) = &args.window {
        if w.len() != 2 || w[0] > w[1] {
            anyhow::bail!("--window expects LO,HI with LO <= HI");
        }
        opts.window = (w[0], w[1]);
    }
    opts.slack = args.slack;
    opts.fstar = args.fstar;
    opts.cbound = args.cbound;
    opts.gap_floor = args.gap_floor;
    opts.gamma1 = args.gamma1;
    opts.gamma2 = args.gamma2;
    opts.sigma_min = args.sigma_min;

    let mut all_pass = true;
    for path in &args.traces {
        let records = load_trace(path)?;
        let report = verify_rate(&records, &opts);
        let verdict = match report.verdict {
            RateVerdict::Pass => "pass",
            RateVerdict::Fail => "FAIL",
            RateVerdict::Inconclusive => "inconclusive",
        };
        let slope = report
            .fitted_slope
            .map(|s| format!("{s:.3}"))
            .unwrap_or_else(|| "n/a".into());
        println!(
            "{}: {verdict} (slope {slope} vs {} + {}, points {}, sigma_ok {}, tau_ok {}, runs_ok {}{})",
            path.display(),
            report.theoretical_slope,
            args.slack,
            report.points_used,
            report.sigma_ok,
            report.tau_ok,
            report.runs_ok,
            report
                .cbound_ok
                .map(|ok| format!(", cbound_ok {ok}"))
                .unwrap_or_default(),
        );
        if report.verdict == RateVerdict::Fail
            || !report.sigma_ok
            || !report.tau_ok
            || !report.runs_ok
        {
            all_pass = false;
        }
        if report.cbound_ok == Some(false) {
            all_pass = false;
        }
    }
    Ok(all_pass)
}

fn cmd_bench(config_path: &PathBuf) -> Result<()> {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading config {}", config_path.display()))?;
    let config = parse_config(&text)?;
    let (output, bench_path) = bench_experiment(&config)?;
    print!("{}", summary_table(&output));
    println!("merged comparison written to {}", bench_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { config } => cmd_run(config).map(|()| true),
        Command::Verify(args) => cmd_verify(args),
        Command::Bench { config } => cmd_bench(config).map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
