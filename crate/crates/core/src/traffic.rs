//! Unique-element memory-access counting and bit-weighted traffic.
//!
//! Counting assumes enough on-chip buffering that every tensor element
//! crosses the memory boundary once per use-site, never per arithmetic use:
//! a group reads each element of its external inputs once, writes each
//! element of its exit tensor once, and reads its weights once per batch
//! (batch mode) or once per image (single mode). Tensors handed between
//! stages inside a group never touch memory — precision, and therefore
//! traffic, exists only at group boundaries.

use crate::error::{Error, Result};
use crate::net::{InputRef, NetworkModel};
use crate::precision::PrecisionConfig;
use serde::{Deserialize, Serialize};

/// Whether weights are fetched once per image or amortized over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficMode {
    /// Weights are re-read for every image.
    Single,
    /// Weights are read once per layer for the whole batch.
    Batch,
}

impl TrafficMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrafficMode::Single => "single",
            TrafficMode::Batch => "batch",
        }
    }
}

impl std::fmt::Display for TrafficMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Element accesses attributed to one group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAccess {
    pub name: String,
    /// Elements of external input tensors read, times batch size.
    pub data_reads: u64,
    /// Elements of the exit tensor written, times batch size.
    pub data_writes: u64,
    /// Weight and bias elements read, mode-scaled.
    pub weight_reads: u64,
}

impl GroupAccess {
    pub fn total(&self) -> u64 {
        self.data_reads + self.data_writes + self.weight_reads
    }
}

/// Per-group access counts for one (batch size, mode) setting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessCount {
    pub mode: TrafficMode,
    pub batch_size: u64,
    pub groups: Vec<GroupAccess>,
}

impl AccessCount {
    pub fn total_accesses(&self) -> u64 {
        self.groups.iter().map(GroupAccess::total).sum()
    }
}

/// Counts unique-element accesses per group.
pub fn count_accesses(
    model: &NetworkModel,
    batch_size: usize,
    mode: TrafficMode,
) -> Result<AccessCount> {
    if batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    let batch = batch_size as u64;
    let weight_scale = match mode {
        TrafficMode::Single => batch,
        TrafficMode::Batch => 1,
    };
    let groups = (0..model.group_count())
        .map(|g| {
            let read_elems: u64 = model
                .group_external_inputs(g)
                .iter()
                .map(|&r| model.ref_len(r) as u64)
                .sum();
            let write_elems = model.ref_len(InputRef::Stage(model.group_exit_stage(g))) as u64;
            GroupAccess {
                name: model.groups()[g].name.clone(),
                data_reads: read_elems * batch,
                data_writes: write_elems * batch,
                weight_reads: model.group_weight_elements(g) as u64 * weight_scale,
            }
        })
        .collect();
    Ok(AccessCount {
        mode,
        batch_size: batch,
        groups,
    })
}

/// One group's accesses priced at its assigned widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTraffic {
    pub name: String,
    pub data_reads: u64,
    pub data_writes: u64,
    pub weight_reads: u64,
    /// Bits per data element (32 for a full-precision side).
    pub data_bits: u32,
    /// Bits per weight element.
    pub weight_bits: u32,
    /// `data_bits * (data_reads + data_writes) + weight_bits * weight_reads`.
    pub bits: u64,
}

/// Bit-weighted traffic of an assignment, normalized against 32 bits per
/// element over the same accesses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficReport {
    pub mode: TrafficMode,
    pub batch_size: u64,
    pub groups: Vec<GroupTraffic>,
    pub total_bits: u64,
    /// The same access pattern at 32 bits per element.
    pub baseline_bits: u64,
    /// `total_bits / baseline_bits`, in (0, 1] for widths up to 32.
    pub traffic_ratio: f64,
}

/// Prices `counts` under `config`. The assignment must cover exactly the
/// counted groups, in order.
pub fn traffic(counts: &AccessCount, config: &PrecisionConfig) -> Result<TrafficReport> {
    if counts.groups.len() != config.len()
        || counts
            .groups
            .iter()
            .zip(config.group_names())
            .any(|(g, n)| g.name != n)
    {
        let counted: Vec<&str> = counts.groups.iter().map(|g| g.name.as_str()).collect();
        return Err(Error::config(format!(
            "precision assignment covers groups {:?}, access counts have {:?}",
            config.group_names().collect::<Vec<_>>(),
            counted
        )));
    }
    let mut groups = Vec::with_capacity(counts.groups.len());
    let mut total_bits = 0u64;
    let mut baseline_bits = 0u64;
    for (access, precision) in counts.groups.iter().zip(config.groups()) {
        let data_bits = precision.data_bits();
        let weight_bits = precision.weight_bits();
        let bits = u64::from(data_bits) * (access.data_reads + access.data_writes)
            + u64::from(weight_bits) * access.weight_reads;
        total_bits += bits;
        baseline_bits += 32 * access.total();
        groups.push(GroupTraffic {
            name: access.name.clone(),
            data_reads: access.data_reads,
            data_writes: access.data_writes,
            weight_reads: access.weight_reads,
            data_bits,
            weight_bits,
            bits,
        });
    }
    Ok(TrafficReport {
        mode: counts.mode,
        batch_size: counts.batch_size,
        groups,
        total_bits,
        baseline_bits,
        traffic_ratio: total_bits as f64 / baseline_bits as f64,
    })
}
