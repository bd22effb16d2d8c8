//! Flat key-value experiment configuration (`key = value`, `#` comments,
//! dotted keys for per-method overrides).

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// The regularizer attached to a dataset problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reg {
    L2,
    L1,
}

/// What to optimize: a synthetic generator or a LIBSVM file.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Quadratic {
        d: usize,
    },
    LogisticL2 {
        n: usize,
        d: usize,
        lambda: f64,
    },
    LogisticL1 {
        n: usize,
        d: usize,
        lambda: f64,
    },
    LogSumExp {
        terms: usize,
        d: usize,
    },
    Dataset {
        path: PathBuf,
        regularizer: Reg,
        lambda: f64,
    },
}

/// Solver selection keys accepted in the `methods` list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    UaaP1,
    UaaP2Exact,
    UaaP2Inexact,
    UaaP3,
    Aarc,
    Arc,
    Agd,
    Fista,
}

impl MethodKind {
    pub const ALL: [MethodKind; 8] = [
        MethodKind::UaaP1,
        MethodKind::UaaP2Exact,
        MethodKind::UaaP2Inexact,
        MethodKind::UaaP3,
        MethodKind::Aarc,
        MethodKind::Arc,
        MethodKind::Agd,
        MethodKind::Fista,
    ];

    pub fn key(&self) -> &'static str {
        match self {
            MethodKind::UaaP1 => "uaa-p1",
            MethodKind::UaaP2Exact => "uaa-p2-exact",
            MethodKind::UaaP2Inexact => "uaa-p2-inexact",
            MethodKind::UaaP3 => "uaa-p3",
            MethodKind::Aarc => "aarc",
            MethodKind::Arc => "arc",
            MethodKind::Agd => "agd",
            MethodKind::Fista => "fista",
        }
    }
}

impl FromStr for MethodKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodKind::ALL
            .iter()
            .copied()
            .find(|m| m.key() == s)
            .ok_or_else(|| anyhow!("unknown method '{s}'"))
    }
}

/// A full experiment: problem, methods, repetitions and output location.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub methods: Vec<MethodKind>,
    /// Per-method raw overrides from dotted keys, e.g. `uaa-p2-exact.eta`.
    pub overrides: BTreeMap<String, BTreeMap<String, String>>,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Seed for the starting point stream; defaults to `seed`.
    pub start_seed: u64,
    pub repetitions: usize,
    /// Standard deviation of the Gaussian starting point.
    pub start_scale: f64,
    /// Known optimal value, when available, for gap-based stopping/reports.
    pub fstar: Option<f64>,
}

fn parse_scalar<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| anyhow!("key '{key}': cannot parse '{value}': {e}"))
}

/// Parses the flat `key = value` format. Unknown top-level keys and unknown
/// method prefixes are rejected outright.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut plain: BTreeMap<String, String> = BTreeMap::new();
    let mut overrides: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected 'key = value', got '{line}'", lineno + 1))?;
        let key = key.trim();
        let value = value.trim();
        if let Some((prefix, field)) = key.split_once('.') {
            MethodKind::from_str(prefix)
                .with_context(|| format!("line {}: bad override prefix", lineno + 1))?;
            overrides
                .entry(prefix.to_string())
                .or_default()
                .insert(field.to_string(), value.to_string());
        } else {
            if plain.insert(key.to_string(), value.to_string()).is_some() {
                bail!("duplicate key '{key}'");
            }
        }
    }

    let get = |k: &str| plain.get(k).map(String::as_str);
    let known = [
        "problem",
        "n",
        "d",
        "terms",
        "lambda",
        "dataset_path",
        "regularizer",
        "methods",
        "out_dir",
        "seed",
        "start_seed",
        "repetitions",
        "start_scale",
        "fstar",
    ];
    for key in plain.keys() {
        if !known.contains(&key.as_str()) {
            bail!("unknown config key '{key}'");
        }
    }

    let problem_kind = get("problem").ok_or_else(|| anyhow!("missing 'problem' key"))?;
    let n: usize = get("n")
        .map(|v| parse_scalar("n", v))
        .transpose()?
        .unwrap_or(200);
    let d: usize = get("d")
        .map(|v| parse_scalar("d", v))
        .transpose()?
        .unwrap_or(20);
    let terms: usize = get("terms")
        .map(|v| parse_scalar("terms", v))
        .transpose()?
        .unwrap_or(30);
    let lambda: f64 = get("lambda")
        .map(|v| parse_scalar("lambda", v))
        .transpose()?
        .unwrap_or(1e-5);

    let problem = match problem_kind {
        "quadratic" => ProblemSpec::Quadratic { d },
        "logistic-l2" => ProblemSpec::LogisticL2 { n, d, lambda },
        "logistic-l1" => ProblemSpec::LogisticL1 { n, d, lambda },
        "logsumexp" => ProblemSpec::LogSumExp { terms, d },
        "dataset" => {
            let path = get("dataset_path")
                .ok_or_else(|| anyhow!("dataset problem needs 'dataset_path'"))?;
            let regularizer = match get("regularizer").unwrap_or("l2") {
                "l2" => Reg::L2,
                "l1" => Reg::L1,
                other => bail!("unknown regularizer '{other}' (expected l2 or l1)"),
            };
            ProblemSpec::Dataset {
                path: PathBuf::from(path),
                regularizer,
                lambda,
            }
        }
        other => bail!("unknown problem kind '{other}'"),
    };

    let methods_raw = get("methods").ok_or_else(|| anyhow!("missing 'methods' key"))?;
    let mut methods = Vec::new();
    for tok in methods_raw.split(',') {
        let tok = tok.trim();
        if tok.is_empty() {
            continue;
        }
        methods.push(MethodKind::from_str(tok)?);
    }
    if methods.is_empty() {
        bail!("'methods' lists no methods");
    }

    let seed: u64 = get("seed")
        .map(|v| parse_scalar("seed", v))
        .transpose()?
        .unwrap_or(0);
    Ok(ExperimentConfig {
        problem,
        methods,
        overrides,
        out_dir: PathBuf::from(get("out_dir").unwrap_or("traces")),
        seed,
        start_seed: get("start_seed")
            .map(|v| parse_scalar("start_seed", v))
            .transpose()?
            .unwrap_or(seed),
        repetitions: get("repetitions")
            .map(|v| parse_scalar("repetitions", v))
            .transpose()?
            .unwrap_or(1),
        start_scale: get("start_scale")
            .map(|v| parse_scalar("start_scale", v))
            .transpose()?
            .unwrap_or(1.0),
        fstar: get("fstar").map(|v| parse_scalar("fstar", v)).transpose()?,
    })
}
