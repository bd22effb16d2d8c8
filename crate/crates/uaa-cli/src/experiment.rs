//! Runs configured experiments, persists one trace per (method, repetition)
//! and produces comparison CSVs.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DVector;

use uaa_core::driver::{
    aarc_hybrid, agd_baseline, arc_baseline, uaa, AgdBaselineParams, ArcParams, Solution, UaaConfig,
};
use uaa_core::model::ModelVariant;
use uaa_core::problem::{
    gradient_mapping_norm, logistic_l1_problem, logistic_l2_oracle, parse_libsvm, CompositeProblem,
};

use crate::config::{ExperimentConfig, MethodKind, ProblemSpec, Reg};
use crate::synth;
use crate::trace_io;

/// A problem instance ready to solve.
pub struct BuiltProblem {
    pub problem: CompositeProblem,
    pub dim: usize,
    /// Known optimal value when the instance allows computing one.
    pub fstar: Option<f64>,
}

/// Materializes the configured problem (synthetic instances are seeded by the
/// experiment seed, so every method and repetition sees the same data).
pub fn build_problem(spec: &ProblemSpec, seed: u64) -> Result<BuiltProblem> {
    match spec {
        ProblemSpec::Quadratic { d } => {
            let inst = synth::synth_quadratic(*d, seed);
            Ok(BuiltProblem {
                problem: inst.problem(),
                dim: *d,
                fstar: Some(inst.fstar),
            })
        }
        ProblemSpec::LogisticL2 { n, d, lambda } => {
            let data = synth::synth_dataset(*n, *d, seed);
            let oracle = logistic_l2_oracle(data, *lambda)?;
            Ok(BuiltProblem {
                problem: CompositeProblem::smooth(Arc::new(oracle)),
                dim: *d,
                fstar: None,
            })
        }
        ProblemSpec::LogisticL1 { n, d, lambda } => {
            let data = synth::synth_dataset(*n, *d, seed);
            let problem = logistic_l1_problem(data, *lambda)?;
            Ok(BuiltProblem {
                problem,
                dim: *d,
                fstar: None,
            })
        }
        ProblemSpec::LogSumExp { terms, d } => {
            let oracle = synth::synth_logsumexp(*terms, *d, seed);
            Ok(BuiltProblem {
                problem: CompositeProblem::smooth(oracle),
                dim: *d,
                fstar: None,
            })
        }
        ProblemSpec::Dataset {
            path,
            regularizer,
            lambda,
        } => {
            let file = fs::File::open(path)
                .with_context(|| format!("opening dataset {}", path.display()))?;
            let data = parse_libsvm(std::io::BufReader::new(file))?;
            let dim = data.dim();
            let problem = match regularizer {
                Reg::L2 => {
                    let oracle = logistic_l2_oracle(data, *lambda)?;
                    CompositeProblem::smooth(Arc::new(oracle))
                }
                Reg::L1 => logistic_l1_problem(data, *lambda)?,
            };
            Ok(BuiltProblem {
                problem,
                dim,
                fstar: None,
            })
        }
    }
}

fn parse_override<T: std::str::FromStr>(method: &str, key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| anyhow!("{method}.{key}: cannot parse '{value}': {e}"))
}

/// Builds the driver configuration for a uaa-family method, applying dotted
/// overrides. Unknown override keys are config errors.
pub fn uaa_config_for(kind: MethodKind, config: &ExperimentConfig) -> Result<UaaConfig> {
    let (p, variant) = match kind {
        MethodKind::UaaP1 => (1, ModelVariant::FirstOrder),
        MethodKind::UaaP2Exact | MethodKind::Aarc => (2, ModelVariant::ExactHessian),
        MethodKind::UaaP2Inexact => (2, ModelVariant::InexactHessian),
        MethodKind::UaaP3 => (3, ModelVariant::TaylorP),
        other => bail!("{} is not a uaa-family method", other.key()),
    };
    let mut cfg = UaaConfig::for_order(p, variant);
    cfg.seed = config.seed;
    cfg.stopping.fstar_hint = config.fstar;
    if kind == MethodKind::Aarc {
        cfg.hybrid.enabled = true;
    }
    if let Some(map) = config.overrides.get(kind.key()) {
        for (key, value) in map {
            match key.as_str() {
                "sigma0" => cfg.sigma0 = parse_override(kind.key(), key, value)?,
                "sigma_min" => cfg.sigma_min = parse_override(kind.key(), key, value)?,
                "tau0" => cfg.tau0 = parse_override(kind.key(), key, value)?,
                "gamma1" => cfg.gamma1 = parse_override(kind.key(), key, value)?,
                "gamma2" => cfg.gamma2 = parse_override(kind.key(), key, value)?,
                "gamma3" => cfg.gamma3 = parse_override(kind.key(), key, value)?,
                "eta" => cfg.eta = parse_override(kind.key(), key, value)?,
                "kappa_theta" => cfg.kappa_theta = parse_override(kind.key(), key, value)?,
                "grad_map_tol" => {
                    cfg.stopping.grad_map_tol = parse_override(kind.key(), key, value)?
                }
                "max_success" => cfg.stopping.max_success = parse_override(kind.key(), key, value)?,
                "max_total" => cfg.stopping.max_total = parse_override(kind.key(), key, value)?,
                "target_gap" => {
                    cfg.stopping.target_gap = Some(parse_override(kind.key(), key, value)?)
                }
                "strict_listing_tau" => {
                    cfg.strict_listing_tau = parse_override(kind.key(), key, value)?
                }
                "kappa_c" => cfg.fd.kappa_c = parse_override(kind.key(), key, value)?,
                "kappa_hs" => cfg.fd.kappa_hs = parse_override(kind.key(), key, value)?,
                "apgd_max_iters" => {
                    cfg.budget.apgd_max_iters = parse_override(kind.key(), key, value)?
                }
                "lanczos_max_dim" => {
                    cfg.budget.lanczos_max_dim = parse_override(kind.key(), key, value)?
                }
                "hybrid_min_success" => {
                    cfg.hybrid.min_success = parse_override(kind.key(), key, value)?
                }
                "hybrid_rel_progress" => {
                    cfg.hybrid.rel_progress = parse_override(kind.key(), key, value)?
                }
                "arc_grad_tol" => cfg.hybrid.arc_grad_tol = parse_override(kind.key(), key, value)?,
                other => bail!("unknown override key '{}.{other}'", kind.key()),
            }
        }
    }
    Ok(cfg)
}

fn arc_params_for(config: &ExperimentConfig) -> Result<ArcParams> {
    let mut params = ArcParams::default();
    if let Some(map) = config.overrides.get("arc") {
        for (key, value) in map {
            match key.as_str() {
                "sigma0" => params.sigma0 = parse_override("arc", key, value)?,
                "sigma_min" => params.sigma_min = parse_override("arc", key, value)?,
                "gamma1" => params.gamma1 = parse_override("arc", key, value)?,
                "eta1" => params.eta1 = parse_override("arc", key, value)?,
                "eta2" => params.eta2 = parse_override("arc", key, value)?,
                "grad_tol" => params.grad_tol = parse_override("arc", key, value)?,
                "max_iters" => params.max_iters = parse_override("arc", key, value)?,
                "kappa_theta" => params.kappa_theta = parse_override("arc", key, value)?,
                other => bail!("unknown override key 'arc.{other}'"),
            }
        }
    }
    Ok(params)
}

fn agd_params_for(kind: MethodKind, config: &ExperimentConfig) -> Result<AgdBaselineParams> {
    let mut params = AgdBaselineParams::default();
    if let Some(map) = config.overrides.get(kind.key()) {
        for (key, value) in map {
            match key.as_str() {
                "l0" => params.l0 = parse_override(kind.key(), key, value)?,
                "grad_map_tol" => params.grad_map_tol = parse_override(kind.key(), key, value)?,
                "max_iters" => params.max_iters = parse_override(kind.key(), key, value)?,
                "restart" => params.restart = parse_override(kind.key(), key, value)?,
                other => bail!("unknown override key '{}.{other}'", kind.key()),
            }
        }
    }
    Ok(params)
}

/// Runs one method from the given start.
pub fn run_method(
    kind: MethodKind,
    built: &BuiltProblem,
    x0: &DVector<f64>,
    config: &ExperimentConfig,
) -> Result<Solution> {
    let solution = match kind {
        MethodKind::UaaP1
        | MethodKind::UaaP2Exact
        | MethodKind::UaaP2Inexact
        | MethodKind::UaaP3 => {
            let cfg = uaa_config_for(kind, config)?;
            uaa(&built.problem, x0, &cfg)?
        }
        MethodKind::Aarc => {
            let cfg = uaa_config_for(kind, config)?;
            aarc_hybrid(&built.problem, x0, &cfg)?
        }
        MethodKind::Arc => {
            let params = arc_params_for(config)?;
            arc_baseline(&built.problem, x0, &params)?
        }
        MethodKind::Agd | MethodKind::Fista => {
            let params = agd_params_for(kind, config)?;
            agd_baseline(&built.problem, x0, &params)?
        }
    };
    Ok(solution)
}

/// Summary line for one completed run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub method: String,
    pub rep: usize,
    pub status: String,
    pub final_f: f64,
    pub final_grad_map: f64,
    pub successes: usize,
    pub total_iters: usize,
    pub wall_ms: f64,
    pub trace_path: PathBuf,
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub runs: Vec<RunSummary>,
    pub fstar: Option<f64>,
    pub out_dir: PathBuf,
}

fn effective_out_dir(config: &ExperimentConfig) -> PathBuf {
    match std::env::var_os("UAA_OUT_DIR") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => config.out_dir.clone(),
    }
}

/// Validates the config against the problem before any run (unknown method
/// keys and unreadable datasets fail here), then runs every (method,
/// repetition) pair, writing one trace file each plus `summary.csv`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let built = build_problem(&config.problem, config.seed)?;
    let fstar = config.fstar.or(built.fstar);
    let out_dir = effective_out_dir(config);
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    // surface per-method config errors before any run
    for kind in &config.methods {
        match kind {
            MethodKind::Arc => {
                arc_params_for(config)?;
            }
            MethodKind::Agd | MethodKind::Fista => {
                agd_params_for(*kind, config)?;
            }
            other => {
                uaa_config_for(*other, config)?;
            }
        }
    }
    if let Some(map_key) = config
        .overrides
        .keys()
        .find(|k| !config.methods.iter().any(|m| m.key() == k.as_str()))
    {
        bail!("overrides given for '{map_key}' which is not in 'methods'");
    }

    let mut runs = Vec::new();
    for kind in &config.methods {
        for rep in 0..config.repetitions.max(1) {
            let x0 = synth::gaussian_start(
                built.dim,
                config.start_scale,
                config.start_seed + rep as u64,
            );
            let solution = run_method(*kind, &built, &x0, config)
                .with_context(|| format!("running {} (rep {rep})", kind.key()))?;
            let trace_path = out_dir.join(format!("{}-rep{rep}.csv", kind.key()));
            trace_io::write_trace(&trace_path, &solution.trace.records)?;

            let successes = solution.trace.records.iter().filter(|r| r.success).count();
            let wall_ms = solution
                .trace
                .records
                .iter()
                .map(|r| r.wall_ns)
                .sum::<u128>() as f64
                / 1e6;
            runs.push(RunSummary {
                method: kind.key().to_string(),
                rep,
                status: format!("{:?}", solution.status),
                final_f: solution.f,
                final_grad_map: gradient_mapping_norm(&built.problem, &solution.x, 1.0),
                successes,
                total_iters: solution.trace.records.len(),
                wall_ms,
                trace_path,
            });
        }
    }

    let mut summary =
        String::from("method,rep,status,final_F,final_grad_map,successes,total_iters,wall_ms\n");
    for r in &runs {
        summary.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.method,
            r.rep,
            r.status,
            r.final_f,
            r.final_grad_map,
            r.successes,
            r.total_iters,
            r.wall_ms
        ));
    }
    fs::write(out_dir.join("summary.csv"), summary)?;

    Ok(ExperimentOutput {
        runs,
        fstar,
        out_dir,
    })
}

/// Runs the experiment and merges repetition 0 of every method into a single
/// wide CSV (`bench.csv`): per-method column groups of objective, stationarity
/// and cumulative wall time, row-aligned by outer iteration.
pub fn bench_experiment(config: &ExperimentConfig) -> Result<(ExperimentOutput, PathBuf)> {
    let output = run_experiment(config)?;
    let mut per_method = Vec::new();
    let mut max_len = 0usize;
    for kind in &config.methods {
        let run = output
            .runs
            .iter()
            .find(|r| r.method == kind.key() && r.rep == 0)
            .ok_or_else(|| anyhow!("missing rep 0 for {}", kind.key()))?;
        let records = trace_io::read_trace(&run.trace_path)?;
        max_len = max_len.max(records.len());
        per_method.push((kind.key(), records));
    }

    let mut header = String::from("i");
    for (key, _) in &per_method {
        header.push_str(&format!(",{key}.F,{key}.grad_map,{key}.wall_ms"));
    }
    let mut csv = header;
    csv.push('\n');
    let mut cumulative: Vec<f64> = vec![0.0; per_method.len()];
    for row in 0..max_len {
        let mut line = row.to_string();
        for (col, (_, records)) in per_method.iter().enumerate() {
            match records.get(row) {
                Some(rec) => {
                    cumulative[col] += rec.wall_ns as f64 / 1e6;
                    line.push_str(&format!(",{},{},{}", rec.f, rec.grad_map, cumulative[col]));
                }
                None => line.push_str(",,,"),
            }
        }
        csv.push_str(&line);
        csv.push('\n');
    }
    let path = output.out_dir.join("bench.csv");
    fs::write(&path, csv)?;
    Ok((output, path))
}

/// Formats the human-readable summary table printed after `run`.
pub fn summary_table(output: &ExperimentOutput) -> String {
    let mut s = format!(
        "{:<16} {:>3} {:<14} {:>14} {:>12} {:>9} {:>7} {:>10}\n",
        "method", "rep", "status", "final F", "grad_map", "success", "iters", "wall_ms"
    );
    for r in &output.runs {
        s.push_str(&format!(
            "{:<16} {:>3} {:<14} {:>14.6e} {:>12.3e} {:>9} {:>7} {:>10.2}\n",
            r.method,
            r.rep,
            r.status,
            r.final_f,
            r.final_grad_map,
            r.successes,
            r.total_iters,
            r.wall_ms
        ));
    }
    if let Some(fstar) = output.fstar {
        s.push_str(&format!("fstar = {fstar}\n"));
    }
    s
}

/// Re-parses a trace file written by [`run_experiment`]; helper for `verify`.
pub fn load_trace(path: &Path) -> Result<Vec<uaa_core::driver::TraceRecord>> {
    trace_io::read_trace(path)
}
