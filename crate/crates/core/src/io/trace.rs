//! Trace and report emission.
//!
//! Traces have two on-disk forms: a flat CSV (one row per evaluated
//! assignment — the plotting surface) and a JSON document that captures the
//! full structures, baseline included, so a saved exploration can be
//! reloaded and re-queried. CSV emission is canonical: parsing rows and
//! re-emitting them reproduces the bytes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explore::{ExplorationTrace, TraceRecord};
use crate::traffic::TrafficReport;

/// One CSV row of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCsvRow {
    /// Group under per-layer variation; empty for whole-network points.
    pub group: String,
    /// Assignment in the compact `w=...;d=...` form.
    pub config: String,
    pub top1: f64,
    pub relative_accuracy: f64,
    pub traffic_bits: u64,
    pub traffic_ratio: f64,
    /// `uniform`, `mixed`, or `best`.
    pub category: String,
    /// True for points on a greedy descent's adopted path.
    pub adopted: bool,
}

fn row_of(group: &str, baseline_top1: f64, r: &TraceRecord) -> TraceCsvRow {
    TraceCsvRow {
        group: group.to_string(),
        config: r.config.to_compact(),
        top1: r.accuracy.top1,
        relative_accuracy: r
            .accuracy
            .relative
            .unwrap_or(r.accuracy.top1 / baseline_top1),
        traffic_bits: r.traffic.total_bits,
        traffic_ratio: r.traffic.traffic_ratio,
        category: r.category().to_string(),
        adopted: r.adopted,
    }
}

fn rows_to_csv(rows: impl Iterator<Item = TraceCsvRow>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)
            .map_err(|e| Error::parse(format!("trace csv: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::parse(format!("trace csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::parse(format!("trace csv: {e}")))
}

/// Emits a whole-network trace (group column left empty).
pub fn trace_to_csv(trace: &ExplorationTrace) -> Result<String> {
    rows_to_csv(
        trace
            .records
            .iter()
            .map(|r| row_of("", trace.baseline_top1, r)),
    )
}

/// Emits per-group traces into one CSV, rows labeled by group.
pub fn layer_traces_to_csv(traces: &[(String, ExplorationTrace)]) -> Result<String> {
    rows_to_csv(traces.iter().flat_map(|(group, trace)| {
        trace
            .records
            .iter()
            .map(move |r| row_of(group, trace.baseline_top1, r))
    }))
}

/// Parses rows previously emitted by the CSV writers.
pub fn trace_rows_from_csv(s: &str) -> Result<Vec<TraceCsvRow>> {
    csv::Reader::from_reader(s.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<TraceCsvRow>, _>>()
        .map_err(|e| Error::parse(format!("trace csv: {e}")))
}

/// Full-fidelity JSON of a trace.
pub fn trace_to_json(trace: &ExplorationTrace) -> Result<String> {
    serde_json::to_string_pretty(trace).map_err(|e| Error::parse(format!("trace json: {e}")))
}

pub fn trace_from_json(s: &str) -> Result<ExplorationTrace> {
    serde_json::from_str(s).map_err(|e| Error::parse(format!("trace json: {e}")))
}

/// Per-group traces as a JSON array of `{group, trace}` objects.
pub fn layer_traces_to_json(traces: &[(String, ExplorationTrace)]) -> Result<String> {
    #[derive(Serialize)]
    struct Entry<'a> {
        group: &'a str,
        trace: &'a ExplorationTrace,
    }
    let entries: Vec<Entry> = traces
        .iter()
        .map(|(group, trace)| Entry { group, trace })
        .collect();
    serde_json::to_string_pretty(&entries).map_err(|e| Error::parse(format!("trace json: {e}")))
}

/// Traffic report as CSV: one row per group plus a `total` summary row
/// carrying the traffic ratio.
pub fn traffic_report_to_csv(report: &TrafficReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::parse(format!("traffic csv: {e}"));
    w.write_record([
        "group",
        "data_reads",
        "data_writes",
        "weight_reads",
        "data_bits",
        "weight_bits",
        "bits_total",
        "traffic_ratio",
    ])
    .map_err(err)?;
    let mut dr = 0u64;
    let mut dw = 0u64;
    let mut wr = 0u64;
    for g in &report.groups {
        dr += g.data_reads;
        dw += g.data_writes;
        wr += g.weight_reads;
        w.write_record([
            g.name.as_str(),
            &g.data_reads.to_string(),
            &g.data_writes.to_string(),
            &g.weight_reads.to_string(),
            &g.data_bits.to_string(),
            &g.weight_bits.to_string(),
            &g.bits.to_string(),
            "",
        ])
        .map_err(err)?;
    }
    w.write_record([
        "total",
        &dr.to_string(),
        &dw.to_string(),
        &wr.to_string(),
        "",
        "",
        &report.total_bits.to_string(),
        &report.traffic_ratio.to_string(),
    ])
    .map_err(err)?;
    let bytes = w.into_inner().map_err(|e| Error::parse(format!("traffic csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::parse(format!("traffic csv: {e}")))
}

/// Traffic report as JSON.
pub fn traffic_report_to_json(report: &TrafficReport) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| Error::parse(format!("traffic json: {e}")))
}
