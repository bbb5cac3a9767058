//! Human-readable table, JSON summary and raw CSV output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::scenario::RunResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    Json,
    Csv,
}

/// Configuration echo; enough to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub cs_ms: f64,
    pub net_mean: f64,
    pub net_std: f64,
    pub proc_mean: f64,
    pub proc_std: f64,
    pub server_coeff: f64,
    pub server_div: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub metric: String,
    pub count: usize,
    pub mean_ms: f64,
    pub stddev_ms: Option<f64>,
    pub min_ms: f64,
    pub max_ms: f64,
    pub messages_per_entry: Option<f64>,
    pub config: ConfigEcho,
}

/// `{ algorithm: { regime: RegimeReport } }`
pub type ReportDocument = BTreeMap<String, BTreeMap<String, RegimeReport>>;

pub fn regime_report<T: Scalar>(result: &RunResult<T>) -> Option<RegimeReport> {
    let summary = result.summary?;
    let cfg = &result.config;
    let d = cfg.delay_model();
    Some(RegimeReport {
        metric: result.metric.as_str().to_string(),
        count: summary.count,
        mean_ms: summary.mean.as_f64(),
        stddev_ms: summary.stddev.map(Scalar::as_f64),
        min_ms: summary.min.as_f64(),
        max_ms: summary.max.as_f64(),
        messages_per_entry: result.messages_per_entry,
        config: ConfigEcho {
            n: cfg.n,
            trials: cfg.trials,
            seed: cfg.seed,
            cs_ms: cfg.cs_duration.as_f64(),
            net_mean: d.net_mean.as_f64(),
            net_std: d.net_std.as_f64(),
            proc_mean: d.proc_mean.as_f64(),
            proc_std: d.proc_std.as_f64(),
            server_coeff: d.server_coeff.as_f64(),
            server_div: d.server_divisor.as_f64(),
        },
    })
}

pub fn document<T: Scalar>(results: &[RunResult<T>]) -> ReportDocument {
    let mut doc = ReportDocument::new();
    for r in results {
        if let Some(report) = regime_report(r) {
            doc.entry(r.config.algorithm.to_string())
                .or_default()
                .insert(r.config.regime.to_string(), report);
        }
    }
    doc
}

pub fn render_json<T: Scalar>(results: &[RunResult<T>]) -> String {
    let mut s = serde_json::to_string_pretty(&document(results)).expect("report serializes");
    s.push('\n');
    s
}

pub fn render_table<T: Scalar>(results: &[RunResult<T>]) -> String {
    let mut rows: Vec<&RunResult<T>> = results.iter().collect();
    rows.sort_by_key(|r| (r.config.algorithm, r.config.regime));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:<9} {:<12} {:>6} {:>14} {:>12} {:>14} {:>14}",
        "algo", "regime", "metric", "count", "mean_ms", "stddev_ms", "min_ms", "max_ms"
    );
    for r in rows {
        let Some(s) = r.summary else { continue };
        let stddev = s
            .stddev
            .map_or_else(|| "-".to_string(), |v| format!("{:.4}", v.as_f64()));
        let _ = writeln!(
            out,
            "{:<8} {:<9} {:<12} {:>6} {:>14.4} {:>12} {:>14.4} {:>14.4}",
            r.config.algorithm.as_str(),
            r.config.regime.as_str(),
            r.metric.as_str(),
            s.count,
            s.mean.as_f64(),
            stddev,
            s.min.as_f64(),
            s.max.as_f64(),
        );
    }
    out
}

/// Raw samples as `trial,metric,node,value_ms`.
pub fn render_csv<T: Scalar>(results: &[RunResult<T>]) -> io::Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["trial", "metric", "node", "value_ms"])?;
    for r in results {
        for s in &r.samples {
            writer.write_record([
                s.trial.to_string(),
                r.metric.as_str().to_string(),
                s.node.to_string(),
                s.value.as_f64().to_string(),
            ])?;
        }
    }
    writer
        .into_inner()
        .map_err(|e| io::Error::other(e.to_string()))
}

/// Writes `results` in `format` and returns the number of bytes written.
pub fn emit_report<T: Scalar, W: Write>(results: &[RunResult<T>], format: Format, out: &mut W) -> io::Result<usize> {
    let bytes = match format {
        Format::Table => render_table(results).into_bytes(),
        Format::Json => render_json(results).into_bytes(),
        Format::Csv => render_csv(results)?,
    };
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(bytes.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{run, Algorithm, Regime, ScenarioConfig};

    fn ring_loaded() -> RunResult<f64> {
        run(&ScenarioConfig::new(Algorithm::Ring, Regime::Loaded).deterministic()).unwrap()
    }

    #[test]
    fn table_row_for_zero_variance_ring() {
        let table = render_table(&[ring_loaded()]);
        let row: Vec<&str> = table.lines().nth(1).unwrap().split_whitespace().collect();
        assert_eq!(
            row,
            ["ring", "loaded", "sync_delay", "50", "45.0000", "0.0000", "45.0000", "45.0000"]
        );
    }

    #[test]
    fn json_round_trip() {
        let r = ring_loaded();
        let doc: ReportDocument = serde_json::from_str(&render_json(std::slice::from_ref(&r))).unwrap();
        let got = &doc["ring"]["loaded"];
        let s = r.summary.unwrap();
        assert_eq!(got.mean_ms, s.mean);
        assert_eq!(got.stddev_ms, s.stddev);
        assert_eq!((got.min_ms, got.max_ms, got.count), (s.min, s.max, s.count));
        assert_eq!(got.metric, "sync_delay");
        assert_eq!(got.messages_per_entry, Some(1.0));
        assert_eq!(got.config.n, 100);
    }

    #[test]
    fn csv_has_header_plus_samples() {
        let r = run(&ScenarioConfig::<f64>::new(Algorithm::Central, Regime::Unloaded).nodes(5)).unwrap();
        let csv = String::from_utf8(render_csv(&[r]).unwrap()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 51);
        assert_eq!(lines[0], "trial,metric,node,value_ms");
        assert!(lines[1].starts_with("0,client_delay,"));
    }

    #[test]
    fn emit_counts_bytes() {
        let mut buf = Vec::new();
        let n = emit_report(&[ring_loaded()], Format::Json, &mut buf).unwrap();
        assert_eq!(n, buf.len());
    }
}
