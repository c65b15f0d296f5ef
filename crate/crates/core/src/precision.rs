//! Per-group precision assignments.
//!
//! Each layer group carries two independent choices: the format its weights
//! are stored in and the format its output data is rounded to. `None` means
//! the side stays in full (double) precision; the traffic model prices that
//! side at the 32-bit reference width.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fixed::FixedPointFormat;
use crate::net::NetworkModel;
use serde::{Deserialize, Serialize};

/// Reference word width used when a side is left in full precision.
pub const FULL_PRECISION_BITS: u32 = 32;

/// Precision choice for one layer group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct GroupPrecision {
    pub weights: Option<FixedPointFormat>,
    pub data: Option<FixedPointFormat>,
}

impl GroupPrecision {
    pub fn full_precision() -> Self {
        GroupPrecision::default()
    }

    /// Same format on both sides.
    pub fn uniform(fmt: FixedPointFormat) -> Self {
        GroupPrecision {
            weights: Some(fmt),
            data: Some(fmt),
        }
    }

    pub fn is_full(&self) -> bool {
        self.weights.is_none() && self.data.is_none()
    }

    /// Bits per stored word on each side, full precision counting as the
    /// 32-bit reference.
    pub fn weight_bits(&self) -> u32 {
        self.weights.map_or(FULL_PRECISION_BITS, |f| f.width())
    }

    pub fn data_bits(&self) -> u32 {
        self.data.map_or(FULL_PRECISION_BITS, |f| f.width())
    }
}

/// An ordered precision assignment, one entry per layer group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrecisionConfig {
    names: Vec<String>,
    groups: Vec<GroupPrecision>,
}

impl PrecisionConfig {
    /// All groups at full precision.
    pub fn full_precision<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let groups = vec![GroupPrecision::full_precision(); names.len()];
        PrecisionConfig { names, groups }
    }

    /// Full-precision assignment matching a model's groups.
    pub fn for_model(model: &NetworkModel) -> Self {
        PrecisionConfig::full_precision(model.group_names())
    }

    /// The same weight/data choice applied to every group.
    pub fn uniform_for<I, S>(
        names: I,
        weights: Option<FixedPointFormat>,
        data: Option<FixedPointFormat>,
    ) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut cfg = PrecisionConfig::full_precision(names);
        for g in &mut cfg.groups {
            g.weights = weights;
            g.data = data;
        }
        cfg
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group_names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn group(&self, index: usize) -> &GroupPrecision {
        &self.groups[index]
    }

    pub fn group_mut(&mut self, index: usize) -> &mut GroupPrecision {
        &mut self.groups[index]
    }

    pub fn groups(&self) -> &[GroupPrecision] {
        &self.groups
    }

    pub fn is_full_precision(&self) -> bool {
        self.groups.iter().all(GroupPrecision::is_full)
    }

    /// True when every group carries the same weight/data choice.
    pub fn is_uniform(&self) -> bool {
        self.groups.windows(2).all(|w| w[0] == w[1])
    }

    /// Errors unless this assignment names exactly the model's groups, in
    /// the model's order.
    pub fn check_alignment(&self, model: &NetworkModel) -> Result<()> {
        let model_names = model.group_names();
        if self.names.len() != model_names.len()
            || self
                .names
                .iter()
                .zip(&model_names)
                .any(|(a, b)| a.as_str() != *b)
        {
            return Err(Error::config(format!(
                "precision assignment covers groups {:?}, model has {:?}",
                self.names, model_names
            )));
        }
        Ok(())
    }

    /// Sum of per-group word widths on both sides; used as a compactness
    /// tie-break between otherwise equivalent assignments.
    pub fn total_format_bits(&self) -> u32 {
        self.groups
            .iter()
            .map(|g| g.weight_bits() + g.data_bits())
            .sum()
    }

    /// Weight formats joined with `-`, e.g. `1.10-1.10-1.10-1.10`;
    /// full-precision sides render as `full`.
    pub fn weights_dashed(&self) -> String {
        dashed(self.groups.iter().map(|g| g.weights))
    }

    /// Data formats joined with `-`, e.g. `1.1-3.1-3.0-3.0`.
    pub fn data_dashed(&self) -> String {
        dashed(self.groups.iter().map(|g| g.data))
    }

    /// Parses the dashed shorthand, applying each format to **both** the
    /// weight and data side of its group. `full` leaves a group at full
    /// precision.
    pub fn parse_dashed(names: &[&str], s: &str) -> Result<Self> {
        let sides = parse_dashed_side(names, s)?;
        let mut cfg = PrecisionConfig::full_precision(names.iter().copied());
        for (g, fmt) in cfg.groups.iter_mut().zip(sides) {
            g.weights = fmt;
            g.data = fmt;
        }
        Ok(cfg)
    }

    /// One line per group in model order:
    /// `name: weights=I.F data=I.F`, with `full` for an unquantized side.
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        for (name, g) in self.names.iter().zip(&self.groups) {
            let _ = writeln!(
                out,
                "{name}: weights={} data={}",
                side_str(g.weights),
                side_str(g.data)
            );
        }
        out
    }

    /// Parses the document form. Every group must appear exactly once, in
    /// the model's group order; blank lines and `#` comments are ignored.
    pub fn parse_document(names: &[&str], s: &str) -> Result<Self> {
        let mut cfg = PrecisionConfig::full_precision(names.iter().copied());
        let mut next = 0usize;
        for (lineno, raw) in s.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (name, rest) = line.split_once(':').ok_or_else(|| {
                Error::parse(format!("line {}: expected `group: ...`, got {raw:?}", lineno + 1))
            })?;
            let name = name.trim();
            if next >= names.len() {
                return Err(Error::parse(format!(
                    "line {}: unexpected extra group {name:?}",
                    lineno + 1
                )));
            }
            if name != names[next] {
                return Err(Error::parse(format!(
                    "line {}: expected group {:?} (model order), got {name:?}",
                    lineno + 1,
                    names[next]
                )));
            }
            let mut weights = None;
            let mut data = None;
            let mut saw_w = false;
            let mut saw_d = false;
            for field in rest.split_whitespace() {
                let (key, value) = field.split_once('=').ok_or_else(|| {
                    Error::parse(format!(
                        "line {}: expected `key=value`, got {field:?}",
                        lineno + 1
                    ))
                })?;
                let parsed = parse_side(value).map_err(|e| {
                    Error::parse(format!("line {}: {key}: {e}", lineno + 1))
                })?;
                match key {
                    "weights" if !saw_w => {
                        weights = parsed;
                        saw_w = true;
                    }
                    "data" if !saw_d => {
                        data = parsed;
                        saw_d = true;
                    }
                    "weights" | "data" => {
                        return Err(Error::parse(format!(
                            "line {}: duplicate {key} field",
                            lineno + 1
                        )))
                    }
                    _ => {
                        return Err(Error::parse(format!(
                            "line {}: unknown field {key:?} (expected weights/data)",
                            lineno + 1
                        )))
                    }
                }
            }
            if !saw_w || !saw_d {
                return Err(Error::parse(format!(
                    "line {}: group {name:?} must set both weights= and data=",
                    lineno + 1
                )));
            }
            cfg.groups[next] = GroupPrecision { weights, data };
            next += 1;
        }
        if next != names.len() {
            return Err(Error::parse(format!(
                "missing group {:?}: config must list all {} groups",
                names[next],
                names.len()
            )));
        }
        Ok(cfg)
    }

    /// Single-line lossless form used in traces: `w=<dashed>;d=<dashed>`.
    pub fn to_compact(&self) -> String {
        format!("w={};d={}", self.weights_dashed(), self.data_dashed())
    }

    pub fn parse_compact(names: &[&str], s: &str) -> Result<Self> {
        let (w_part, d_part) = s
            .split_once(';')
            .ok_or_else(|| Error::parse(format!("expected `w=...;d=...`, got {s:?}")))?;
        let w = w_part
            .strip_prefix("w=")
            .ok_or_else(|| Error::parse(format!("expected `w=...`, got {w_part:?}")))?;
        let d = d_part
            .strip_prefix("d=")
            .ok_or_else(|| Error::parse(format!("expected `d=...`, got {d_part:?}")))?;
        let weights = parse_dashed_side(names, w)?;
        let data = parse_dashed_side(names, d)?;
        let mut cfg = PrecisionConfig::full_precision(names.iter().copied());
        for ((g, w), d) in cfg.groups.iter_mut().zip(weights).zip(data) {
            g.weights = w;
            g.data = d;
        }
        Ok(cfg)
    }
}

fn side_str(side: Option<FixedPointFormat>) -> String {
    match side {
        Some(fmt) => fmt.to_string(),
        None => "full".to_string(),
    }
}

fn parse_side(s: &str) -> Result<Option<FixedPointFormat>> {
    if s == "full" {
        Ok(None)
    } else {
        Ok(Some(s.parse()?))
    }
}

fn dashed(sides: impl Iterator<Item = Option<FixedPointFormat>>) -> String {
    sides.map(side_str).collect::<Vec<_>>().join("-")
}

fn parse_dashed_side(names: &[&str], s: &str) -> Result<Vec<Option<FixedPointFormat>>> {
    let tokens: Vec<&str> = s.split('-').collect();
    if tokens.len() != names.len() {
        return Err(Error::parse(format!(
            "dashed assignment {s:?} names {} group(s), model has {}",
            tokens.len(),
            names.len()
        )));
    }
    tokens.into_iter().map(parse_side).collect()
}
