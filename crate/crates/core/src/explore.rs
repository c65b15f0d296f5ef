//! Precision-space exploration: uniform and per-layer sweeps, greedy
//! one-bit descent, Pareto-frontier extraction, and tolerance-constrained
//! selection.
//!
//! Every operation records each evaluated assignment together with its
//! accuracy and traffic, so one expensive exploration answers any number of
//! later "cheapest assignment within X% accuracy loss" queries.

use crate::error::{Error, Result};
use crate::fixed::FixedPointFormat;
use crate::inject::{evaluate, AccuracyResult, Sample};
use crate::net::{NetworkModel, WeightStore};
use crate::precision::{GroupPrecision, PrecisionConfig};
use crate::traffic::{count_accesses, traffic, AccessCount, TrafficMode, TrafficReport};
use serde::{Deserialize, Serialize};

/// Which format parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepTarget {
    /// Weight fractional bits; weight integer bits stay fixed.
    WeightsFrac,
    /// Data integer bits; data fractional bits stay fixed.
    DataInt,
    /// Data fractional bits; data integer bits stay fixed.
    DataFrac,
}

/// An inclusive bit range for one target parameter plus the fixed values of
/// its complements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepSpec {
    target: SweepTarget,
    min: u32,
    max: u32,
    weight_int: u32,
    data_int: u32,
    data_frac: u32,
}

impl SweepSpec {
    /// Defaults: weight integer bits 1 (sign only), data complements 8/8.
    pub fn new(target: SweepTarget, min: u32, max: u32) -> Result<Self> {
        SweepSpec {
            target,
            min,
            max,
            weight_int: 1,
            data_int: 8,
            data_frac: 8,
        }
        .validated()
    }

    pub fn with_weight_int(mut self, bits: u32) -> Result<Self> {
        self.weight_int = bits;
        self.validated()
    }

    pub fn with_data_int(mut self, bits: u32) -> Result<Self> {
        self.data_int = bits;
        self.validated()
    }

    pub fn with_data_frac(mut self, bits: u32) -> Result<Self> {
        self.data_frac = bits;
        self.validated()
    }

    pub fn target(&self) -> SweepTarget {
        self.target
    }

    pub fn min(&self) -> u32 {
        self.min
    }

    pub fn max(&self) -> u32 {
        self.max
    }

    fn validated(self) -> Result<Self> {
        if self.min > self.max {
            return Err(Error::config(format!(
                "empty sweep range [{}, {}]",
                self.min, self.max
            )));
        }
        // Constructing the widest swept format checks both the per-field
        // ranges and the total width.
        let _ = self.format_at(self.max)?;
        let _ = self.format_at(self.min)?;
        Ok(self)
    }

    /// The swept side's format at one bit value.
    fn format_at(&self, bits: u32) -> Result<FixedPointFormat> {
        match self.target {
            SweepTarget::WeightsFrac => FixedPointFormat::new(self.weight_int, bits),
            SweepTarget::DataInt => FixedPointFormat::new(bits, self.data_frac),
            SweepTarget::DataFrac => FixedPointFormat::new(self.data_int, bits),
        }
    }

    /// Precision for one group at one swept bit value; the other side stays
    /// at full precision.
    fn group_precision_at(&self, bits: u32) -> Result<GroupPrecision> {
        let fmt = self.format_at(bits)?;
        Ok(match self.target {
            SweepTarget::WeightsFrac => GroupPrecision {
                weights: Some(fmt),
                data: None,
            },
            SweepTarget::DataInt | SweepTarget::DataFrac => GroupPrecision {
                weights: None,
                data: Some(fmt),
            },
        })
    }
}

/// How a trace point was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    /// Every group set identically.
    Uniform,
    /// Groups differ (per-layer sweeps, descent deltas).
    Mixed,
}

impl PointKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PointKind::Uniform => "uniform",
            PointKind::Mixed => "mixed",
        }
    }
}

/// One evaluated assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub config: PrecisionConfig,
    pub accuracy: AccuracyResult,
    pub traffic: TrafficReport,
    pub kind: PointKind,
    /// On the Pareto frontier of its trace (set by `annotate_best`).
    pub best: bool,
    /// On the adopted path of a greedy descent.
    pub adopted: bool,
}

impl TraceRecord {
    /// Reported category: frontier membership outranks origin.
    pub fn category(&self) -> &'static str {
        if self.best {
            "best"
        } else {
            self.kind.as_str()
        }
    }
}

/// An ordered list of evaluated assignments sharing one baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationTrace {
    /// Full-precision top-1 accuracy all relative figures refer to.
    pub baseline_top1: f64,
    pub records: Vec<TraceRecord>,
}

impl ExplorationTrace {
    pub fn new(baseline_top1: f64) -> Self {
        ExplorationTrace {
            baseline_top1,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Indices of records on the Pareto frontier (minimal traffic, maximal
    /// accuracy).
    pub fn frontier(&self) -> Vec<usize> {
        let points: Vec<(u64, f64)> = self
            .records
            .iter()
            .map(|r| (r.traffic.total_bits, r.accuracy.top1))
            .collect();
        pareto_indices(&points)
    }

    /// Recomputes the `best` flag on every record.
    pub fn annotate_best(&mut self) {
        for r in &mut self.records {
            r.best = false;
        }
        for i in self.frontier() {
            self.records[i].best = true;
        }
    }
}

/// Indices of points not weakly dominated: kept unless some other point has
/// traffic ≤ and accuracy ≥ with at least one strict. Duplicate points
/// dominate neither each other nor themselves, so all copies survive.
pub fn pareto_indices(points: &[(u64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .0
            .cmp(&points[b].0)
            .then(points[b].1.total_cmp(&points[a].1))
    });
    let mut keep = Vec::new();
    // Highest accuracy among strictly cheaper points.
    let mut best_cheaper = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let traffic = points[order[i]].0;
        let mut j = i;
        while j < order.len() && points[order[j]].0 == traffic {
            j += 1;
        }
        let block_max = points[order[i]].1;
        for &idx in &order[i..j] {
            let acc = points[idx].1;
            if acc == block_max && acc > best_cheaper {
                keep.push(idx);
            }
        }
        best_cheaper = best_cheaper.max(block_max);
        i = j;
    }
    keep.sort_unstable();
    keep
}

/// Outcome of a tolerance query against a trace.
#[derive(Debug, Clone, PartialEq)]
pub enum ToleranceSelection {
    /// Index of the cheapest feasible record and its relative accuracy.
    Selected { index: usize, relative: f64 },
    /// No record met the tolerance; the closest miss is reported.
    Infeasible { best_index: usize, best_relative: f64 },
}

/// Picks the minimum-traffic record whose accuracy relative to
/// `baseline_top1` is at least `1 - tolerance`. Ties prefer fewer total
/// format bits, then the earlier record.
pub fn select_for_tolerance(
    trace: &ExplorationTrace,
    baseline_top1: f64,
    tolerance: f64,
) -> Result<ToleranceSelection> {
    if trace.is_empty() {
        return Err(Error::config("cannot select from an empty trace"));
    }
    if !(baseline_top1 > 0.0) {
        return Err(Error::config(format!(
            "baseline accuracy must be positive, got {baseline_top1}"
        )));
    }
    if !(tolerance > 0.0 && tolerance < 1.0) {
        return Err(Error::config(format!(
            "tolerance must be in (0, 1), got {tolerance}"
        )));
    }
    let threshold = 1.0 - tolerance;
    let mut selected: Option<(usize, u64, u32)> = None;
    let mut best_miss = (0usize, f64::NEG_INFINITY);
    for (i, r) in trace.records.iter().enumerate() {
        let relative = r.accuracy.top1 / baseline_top1;
        if relative > best_miss.1 {
            best_miss = (i, relative);
        }
        if relative < threshold {
            continue;
        }
        let key = (r.traffic.total_bits, r.config.total_format_bits());
        let better = match selected {
            None => true,
            Some((_, bits, fmt_bits)) => key < (bits, fmt_bits),
        };
        if better {
            selected = Some((i, key.0, key.1));
        }
    }
    Ok(match selected {
        Some((index, _, _)) => ToleranceSelection::Selected {
            index,
            relative: trace.records[index].accuracy.top1 / baseline_top1,
        },
        None => ToleranceSelection::Infeasible {
            best_index: best_miss.0,
            best_relative: best_miss.1,
        },
    })
}

/// Knobs of the greedy descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentOptions {
    /// Also generate fractional-bit deltas (data F, weight F). When off,
    /// only data integer bits shrink and all fractional bits stay as
    /// initialized.
    pub vary_fraction: bool,
    /// Stop once the adopted accuracy falls below this fraction of the
    /// baseline.
    pub accuracy_floor: f64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions {
            vary_fraction: true,
            accuracy_floor: 0.5,
        }
    }
}

/// Shared context for exploration runs: one model, weight store, evaluation
/// set, and traffic setting. The full-precision baseline and the access
/// counts are computed once at construction.
pub struct Explorer<'a> {
    model: &'a NetworkModel,
    store: &'a WeightStore,
    samples: &'a [Sample],
    batch_size: usize,
    counts: AccessCount,
    baseline: AccuracyResult,
}

impl<'a> Explorer<'a> {
    pub fn new(
        model: &'a NetworkModel,
        store: &'a WeightStore,
        samples: &'a [Sample],
        batch_size: usize,
        traffic_batch: usize,
        mode: TrafficMode,
    ) -> Result<Self> {
        let counts = count_accesses(model, traffic_batch, mode)?;
        let baseline = evaluate(
            model,
            store,
            &PrecisionConfig::for_model(model),
            samples,
            batch_size,
            None,
        )?;
        Ok(Explorer {
            model,
            store,
            samples,
            batch_size,
            counts,
            baseline,
        })
    }

    pub fn baseline_top1(&self) -> f64 {
        self.baseline.top1
    }

    pub fn access_counts(&self) -> &AccessCount {
        &self.counts
    }

    fn record(
        &self,
        config: PrecisionConfig,
        kind: PointKind,
        adopted: bool,
    ) -> Result<TraceRecord> {
        let accuracy = evaluate(
            self.model,
            self.store,
            &config,
            self.samples,
            self.batch_size,
            Some(self.baseline.top1),
        )?;
        let traffic = traffic(&self.counts, &config)?;
        Ok(TraceRecord {
            config,
            accuracy,
            traffic,
            kind,
            best: false,
            adopted,
        })
    }

    /// One evaluation per bit value in the range, every group set
    /// identically; the non-target side stays at full precision.
    pub fn sweep_uniform(&self, spec: &SweepSpec) -> Result<ExplorationTrace> {
        let mut trace = ExplorationTrace::new(self.baseline.top1);
        for bits in spec.min..=spec.max {
            let gp = spec
                .group_precision_at(bits)
                .map_err(|e| Error::config(format!("sweep value {bits}: {e}")))?;
            let mut cfg = PrecisionConfig::for_model(self.model);
            for g in 0..cfg.len() {
                *cfg.group_mut(g) = gp;
            }
            trace.records.push(self.record(cfg, PointKind::Uniform, false)?);
        }
        trace.annotate_best();
        Ok(trace)
    }

    /// For each group, a trace varying only that group's target parameter
    /// while every other group stays at full precision.
    pub fn sweep_per_layer(&self, spec: &SweepSpec) -> Result<Vec<(String, ExplorationTrace)>> {
        let mut out = Vec::with_capacity(self.model.group_count());
        for g in 0..self.model.group_count() {
            let mut trace = ExplorationTrace::new(self.baseline.top1);
            for bits in spec.min..=spec.max {
                let gp = spec
                    .group_precision_at(bits)
                    .map_err(|e| Error::config(format!("sweep value {bits}: {e}")))?;
                let mut cfg = PrecisionConfig::for_model(self.model);
                *cfg.group_mut(g) = gp;
                trace.records.push(self.record(cfg, PointKind::Mixed, false)?);
            }
            trace.annotate_best();
            out.push((self.model.groups()[g].name.clone(), trace));
        }
        Ok(out)
    }

    /// Iterative one-bit reduction. Each round builds every legal delta
    /// (one parameter of one group reduced by one bit), evaluates all of
    /// them, and adopts the most accurate; ties go to the earliest group,
    /// then data integer before data fraction before weight fraction. The
    /// descent stops when no legal delta remains or the adopted accuracy
    /// falls below the floor. All evaluated deltas stay in the trace.
    ///
    /// Legal reductions: data I down to 1, and with `vary_fraction` data F
    /// and weight F down to 0. Weight I is never touched (one sign bit is
    /// the working assumption throughout), full-precision sides are left
    /// alone, and the weight side of a weightless group is skipped — such a
    /// delta could never change accuracy or traffic.
    pub fn greedy_descent(
        &self,
        init: &PrecisionConfig,
        opts: &DescentOptions,
    ) -> Result<ExplorationTrace> {
        init.check_alignment(self.model)?;
        if !(0.0..1.0).contains(&opts.accuracy_floor) {
            return Err(Error::config(format!(
                "accuracy floor must be in [0, 1), got {}",
                opts.accuracy_floor
            )));
        }
        let floor = opts.accuracy_floor * self.baseline.top1;
        let mut trace = ExplorationTrace::new(self.baseline.top1);
        let init_kind = if init.is_uniform() {
            PointKind::Uniform
        } else {
            PointKind::Mixed
        };
        trace.records.push(self.record(init.clone(), init_kind, true)?);
        let mut current = init.clone();
        loop {
            let deltas = self.deltas_of(&current, opts);
            if deltas.is_empty() {
                break;
            }
            let first = trace.records.len();
            for cfg in deltas {
                trace.records.push(self.record(cfg, PointKind::Mixed, false)?);
            }
            let mut best = first;
            for i in first + 1..trace.records.len() {
                if trace.records[i].accuracy.top1 > trace.records[best].accuracy.top1 {
                    best = i;
                }
            }
            trace.records[best].adopted = true;
            current = trace.records[best].config.clone();
            if trace.records[best].accuracy.top1 < floor {
                break;
            }
        }
        trace.annotate_best();
        Ok(trace)
    }

    /// All single-bit-decrement neighbours of `current`, in tie-break
    /// order: by group, then data I, data F, weight F.
    fn deltas_of(&self, current: &PrecisionConfig, opts: &DescentOptions) -> Vec<PrecisionConfig> {
        let mut out = Vec::new();
        for g in 0..current.len() {
            let gp = *current.group(g);
            if let Some(f) = gp.data {
                if f.integer_bits() > 1 {
                    let mut cfg = current.clone();
                    cfg.group_mut(g).data =
                        Some(FixedPointFormat::new(f.integer_bits() - 1, f.fractional_bits()).unwrap());
                    out.push(cfg);
                }
                if opts.vary_fraction && f.fractional_bits() > 0 {
                    let mut cfg = current.clone();
                    cfg.group_mut(g).data =
                        Some(FixedPointFormat::new(f.integer_bits(), f.fractional_bits() - 1).unwrap());
                    out.push(cfg);
                }
            }
            if opts.vary_fraction && self.model.group_weight_elements(g) > 0 {
                if let Some(f) = gp.weights {
                    if f.fractional_bits() > 0 {
                        let mut cfg = current.clone();
                        cfg.group_mut(g).weights = Some(
                            FixedPointFormat::new(f.integer_bits(), f.fractional_bits() - 1).unwrap(),
                        );
                        out.push(cfg);
                    }
                }
            }
        }
        out
    }
}
