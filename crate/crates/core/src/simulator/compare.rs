use serde::{Deserialize, Serialize};

use super::engine::SimResult;
use super::{ArchMode, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub mode: ArchMode,
    pub total_cycles: u64,
    pub latency_ms: f64,
    pub utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub label: String,
    pub delta_cycles: i64,
    /// Latency change relative to the first entry, in percent.
    pub delta_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
    pub deltas: Vec<DeltaRow>,
}

fn pct_change(base: f64, value: f64) -> f64 {
    if base == 0.0 {
        if value == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (value - base) / base * 100.0
    }
}

/// Tabulates results against the first entry.
pub fn compare(results: &[(String, SimResult)]) -> Result<ComparisonTable, SimError> {
    let [(base_label, base), rest @ ..] = results else {
        return Err(SimError::TooFewResults(0));
    };
    if rest.is_empty() {
        return Err(SimError::TooFewResults(1));
    }
    Ok(ComparisonTable {
        baseline: base_label.clone(),
        rows: results
            .iter()
            .map(|(label, r)| ComparisonRow {
                label: label.clone(),
                mode: r.mode,
                total_cycles: r.total_cycles,
                latency_ms: r.latency_ms,
                utilization: r.utilization(),
            })
            .collect(),
        deltas: rest
            .iter()
            .map(|(label, r)| DeltaRow {
                label: label.clone(),
                delta_cycles: r.total_cycles as i64 - base.total_cycles as i64,
                delta_pct: pct_change(base.latency_ms, r.latency_ms),
            })
            .collect(),
    })
}
