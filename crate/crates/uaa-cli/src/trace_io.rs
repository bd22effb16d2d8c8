//! Trace CSV persistence. The column set is fixed; readers reject files with
//! any other header instead of guessing.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

use uaa_core::driver::{Phase, TraceRecord};

pub const TRACE_HEADER: &str =
    "i,phase,success,F,grad_map,sigma,tau,step_norm,inner_iters,theta,wall_ns";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Serializes records to the fixed CSV schema. Float fields use shortest
/// round-trip formatting, so identical runs produce identical bytes.
pub fn trace_to_string(records: &[TraceRecord]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.i,
            r.phase.as_str(),
            r.success,
            r.f,
            r.grad_map,
            r.sigma,
            fmt_opt(r.tau),
            r.step_norm,
            r.inner_iters,
            fmt_opt(r.theta),
            r.wall_ns,
        ));
    }
    out
}

pub fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, trace_to_string(records)).with_context(|| format!("writing {}", path.display()))
}

fn parse_opt(field: &str, what: &str, line: usize) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| anyhow!("line {line}: bad {what} '{field}'"))
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty trace file"))?;
    if header != TRACE_HEADER {
        bail!("unknown trace schema: '{header}'");
    }
    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            bail!("line {lineno}: expected 11 fields, got {}", fields.len());
        }
        records.push(TraceRecord {
            i: fields[0]
                .parse()
                .map_err(|_| anyhow!("line {lineno}: bad index '{}'", fields[0]))?,
            phase: Phase::from_str(fields[1]).map_err(|e| anyhow!("line {lineno}: {e}"))?,
            success: match fields[2] {
                "true" => true,
                "false" => false,
                other => bail!("line {lineno}: bad success flag '{other}'"),
            },
            f: fields[3]
                .parse()
                .map_err(|_| anyhow!("line {lineno}: bad F '{}'", fields[3]))?,
            grad_map: fields[4]
                .parse()
                .map_err(|_| anyhow!("line {lineno}: bad grad_map '{}'", fields[4]))?,
            sigma: fields[5]
                .parse()
                .map_err(|_| anyhow!("line {lineno}: bad sigma '{}'", fields[5]))?,
            tau: parse_opt(fields[6], "tau", lineno)?,
            step_norm: fields[7]
                .parse()
                .map_err(|_| anyhow!("line {lineno}: bad step_norm '{}'", fields[7]))?,
            inner_iters: fields[8]
                .parse()
                .map_err(|_| anyhow!("line {lineno}: bad inner_iters '{}'", fields[8]))?,
            theta: parse_opt(fields[9], "theta", lineno)?,
            wall_ns: fields[10]
                .parse()
                .map_err(|_| anyhow!("line {lineno}: bad wall_ns '{}'", fields[10]))?,
        });
    }
    Ok(records)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_trace(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Byte content of a trace with the wall-clock column blanked, for
/// determinism comparisons.
pub fn strip_wall_ns(trace_text: &str) -> String {
    trace_text
        .lines()
        .map(|line| match line.rfind(',') {
            Some(pos) => &line[..pos],
            None => line,
        })
        .collect::<Vec<_>>()
        .join("\n")
}
