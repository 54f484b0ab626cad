use anyhow::{bail, Context, Result};
use grinder_core::sim::{LedgerSummary, PolicyKind};
use serde::Serialize;
use serde_json::Value;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Serialize)]
pub struct Row {
    pub source: String,
    pub gpu_host: u64,
    pub host_storage: u64,
    pub gpu_storage: u64,
    pub peak_host: u64,
    pub peak_storage: u64,
    pub hit_rate: f64,
    pub modeled_time: f64,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub missing: Vec<String>,
    pub quality: Option<Value>,
    pub trace: Option<Vec<Value>>,
    pub verify: Option<Value>,
    pub oracle: Option<Value>,
    pub sweep: Option<Value>,
    pub rows: Vec<Row>,
}

fn row(source: String, s: &LedgerSummary) -> Row {
    let g = |m: &std::collections::BTreeMap<String, u64>, k: &str| m.get(k).copied().unwrap_or(0);
    Row {
        source,
        gpu_host: g(&s.link_bytes, "gpu_host"),
        host_storage: g(&s.link_bytes, "host_storage"),
        gpu_storage: g(&s.link_bytes, "gpu_storage"),
        peak_host: g(&s.peak_residency, "host"),
        peak_storage: g(&s.peak_residency, "storage"),
        hit_rate: s.hit_rate,
        modeled_time: s.modeled_time,
    }
}

fn read_json(dir: &Path, name: &str, missing: &mut Vec<String>) -> Result<Option<Value>> {
    let path = dir.join(name);
    if !path.exists() {
        missing.push(name.to_string());
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)?;
    Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?))
}

fn read_summary(path: &Path) -> Result<LedgerSummary> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_trace(path: &Path) -> Result<Vec<Value>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("epoch,loss,train_acc") {
        bail!("{} lacks the epoch,loss,train_acc header", path.display());
    }
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let [e, loss, acc] = f.as_slice() else {
                bail!("bad trace row {l:?}");
            };
            Ok(serde_json::json!({
                "epoch": e.parse::<u64>()?,
                "loss": loss.parse::<f64>()?,
                "train_acc": acc.parse::<f64>()?,
            }))
        })
        .collect()
}

/// Gathers whatever earlier commands left in `dir`.
pub fn build(dir: &Path) -> Result<Report> {
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let mut missing = Vec::new();
    let quality = read_json(dir, "quality.json", &mut missing)?;
    let trace_path = dir.join("trace.csv");
    let trace = if trace_path.exists() {
        Some(read_trace(&trace_path)?)
    } else {
        missing.push("trace.csv".into());
        None
    };
    let mut opt = Vec::new();
    let verify = read_json(dir, "verify.json", &mut opt)?;
    let sweep = read_json(dir, "sweep.json", &mut opt)?;

    let mut rows = Vec::new();
    for kind in PolicyKind::ALL {
        let path = dir.join(format!("ledger_{}.json", kind.name()));
        if path.exists() {
            rows.push(row(kind.name().to_string(), &read_summary(&path)?));
        }
    }
    let oracle = if rows.is_empty() {
        missing.push("ledger_<POLICY>.json".into());
        None
    } else {
        read_json(dir, "oracle.json", &mut missing)?
    };
    let train = dir.join("ledger_summary.json");
    if train.exists() {
        rows.push(row("train".into(), &read_summary(&train)?));
    } else {
        missing.push("ledger_summary.json".into());
    }
    Ok(Report {
        missing,
        quality,
        trace,
        verify,
        oracle,
        sweep,
        rows,
    })
}

pub fn table(report: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<20} {:>14} {:>14} {:>14} {:>14} {:>14} {:>8} {:>14}",
        "policy", "gpu_host", "host_storage", "gpu_storage", "peak_host", "peak_storage", "hit_rate", "time_s"
    );
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{:<20} {:>14} {:>14} {:>14} {:>14} {:>14} {:>8.4} {:>14.6e}",
            r.source, r.gpu_host, r.host_storage, r.gpu_storage, r.peak_host, r.peak_storage, r.hit_rate, r.modeled_time
        );
    }
    if let Some(a) = report.quality.as_ref().and_then(|q| q["quality"]["mean_alpha"].as_f64()) {
        let _ = writeln!(s, "\nmean alpha: {a:.4}");
    }
    if let Some(last) = report.trace.as_ref().and_then(|t| t.last()) {
        let _ = writeln!(s, "final epoch {}: loss {}, train acc {}", last["epoch"], last["loss"], last["train_acc"]);
    }
    if !report.missing.is_empty() {
        let _ = writeln!(s, "\nmissing inputs: {}", report.missing.join(", "));
    }
    s
}
