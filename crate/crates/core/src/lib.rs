//! Per-layer fixed-point precision exploration for CNN classifiers.
//!
//! `qsc-core` simulates storing CNN weights and inter-layer data in short
//! signed fixed-point formats while keeping the arithmetic itself in floating
//! point: values are rounded onto the fixed-point grid at layer-group
//! boundaries and converted back, so only the representation error is
//! modeled. On top of that round-trip it provides a forward-only inference
//! engine, top-1 accuracy evaluation, a unique-element memory-traffic model,
//! and search routines (uniform sweeps, per-layer sweeps, greedy bit-width
//! descent with Pareto-frontier extraction) for finding minimum-traffic
//! per-layer precision assignments under an accuracy-loss tolerance.
//!
//! # Modules
//!
//! - [`fixed`] -- fixed-point formats and the lossy round-trip quantizer
//! - [`tensor`] -- dense row-major tensor container
//! - [`net`] -- network model, layer stages, and forward evaluation
//! - [`precision`] -- per-group precision configurations and their text forms
//! - [`inject`] -- precision injection and top-1 accuracy measurement
//! - [`traffic`] -- unique-element access counting and bit-weighted traffic
//! - [`explore`] -- sweeps, greedy descent, Pareto frontier, tolerance selection
//! - [`io`] -- model/weight/dataset file formats and trace serialization

pub mod error;
pub mod explore;
pub mod fixed;
pub mod inject;
pub mod io;
pub mod net;
pub mod precision;
pub mod tensor;
pub mod traffic;

pub use error::{Error, Result};
pub use explore::{
    pareto_indices, select_for_tolerance, DescentOptions, ExplorationTrace, Explorer, SweepSpec,
    SweepTarget, ToleranceSelection, TraceRecord,
};
pub use fixed::{max_abs_error, quantize, quantize_tensor, FixedPointFormat};
pub use inject::{apply_weight_quantization, evaluate, quantized_forward, AccuracyResult, Sample};
pub use net::{forward_network, LayerGroup, NetworkModel, Stage, StageKind, WeightStore};
pub use precision::{GroupPrecision, PrecisionConfig};
pub use tensor::Tensor;
pub use traffic::{count_accesses, traffic, AccessCount, TrafficMode, TrafficReport};
