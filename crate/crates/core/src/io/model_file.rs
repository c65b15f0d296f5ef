//! JSON model descriptions.
//!
//! The file lists stages in topological order and the group partition; all
//! structural validation (shapes, partition, single exit per group) happens
//! in [`NetworkModel::new`], so a file that loads is a file that runs.
//!
//! ```json
//! {
//!   "name": "tiny",
//!   "input_shape": [1, 28, 28],
//!   "class_count": 10,
//!   "stages": [
//!     {"name": "conv1", "kind": "conv", "weights": "conv1_w", "bias": "conv1_b",
//!      "out_channels": 20, "kernel": [5, 5]},
//!     {"name": "pool1", "kind": "max_pool", "window": [2, 2]},
//!     {"name": "ip", "kind": "fully_connected", "weights": "ip_w", "bias": "ip_b",
//!      "out_features": 10}
//!   ],
//!   "groups": [
//!     {"name": "conv1", "members": ["conv1", "pool1"]},
//!     {"name": "ip", "members": ["ip"]}
//!   ]
//! }
//! ```
//!
//! `inputs` may be omitted when a stage consumes its predecessor; `stride`
//! defaults to 1×1 for conv and to the window for pooling; `pad` defaults
//! to zero.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::net::{
    ConvParams, FcParams, LayerGroup, LrnParams, NetworkModel, PoolParams, Stage, StageKind,
};

fn default_stride() -> [usize; 2] {
    [1, 1]
}

fn lrn_size() -> usize {
    LrnParams::default().size
}

fn lrn_alpha() -> f64 {
    LrnParams::default().alpha
}

fn lrn_beta() -> f64 {
    LrnParams::default().beta
}

fn lrn_k() -> f64 {
    LrnParams::default().k
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    name: String,
    input_shape: Vec<usize>,
    class_count: usize,
    stages: Vec<StageFile>,
    groups: Vec<GroupFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupFile {
    name: String,
    members: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct StageFile {
    name: String,
    #[serde(default)]
    inputs: Vec<String>,
    #[serde(flatten)]
    kind: KindFile,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum KindFile {
    Conv {
        weights: String,
        bias: String,
        out_channels: usize,
        kernel: [usize; 2],
        #[serde(default = "default_stride")]
        stride: [usize; 2],
        #[serde(default)]
        pad: [usize; 2],
    },
    FullyConnected {
        weights: String,
        bias: String,
        out_features: usize,
    },
    Relu,
    MaxPool {
        window: [usize; 2],
        stride: Option<[usize; 2]>,
        #[serde(default)]
        pad: [usize; 2],
    },
    AvgPool {
        window: [usize; 2],
        stride: Option<[usize; 2]>,
        #[serde(default)]
        pad: [usize; 2],
    },
    Lrn {
        #[serde(default = "lrn_size")]
        size: usize,
        #[serde(default = "lrn_alpha")]
        alpha: f64,
        #[serde(default = "lrn_beta")]
        beta: f64,
        #[serde(default = "lrn_k")]
        k: f64,
    },
    Dropout,
    Softmax,
    Concat,
}

fn pair(v: [usize; 2]) -> (usize, usize) {
    (v[0], v[1])
}

fn pool_params(window: [usize; 2], stride: Option<[usize; 2]>, pad: [usize; 2]) -> PoolParams {
    PoolParams {
        window: pair(window),
        stride: pair(stride.unwrap_or(window)),
        pad: pair(pad),
    }
}

impl From<KindFile> for StageKind {
    fn from(k: KindFile) -> StageKind {
        match k {
            KindFile::Conv {
                weights,
                bias,
                out_channels,
                kernel,
                stride,
                pad,
            } => StageKind::Conv(ConvParams {
                weights,
                bias,
                out_channels,
                kernel: pair(kernel),
                stride: pair(stride),
                pad: pair(pad),
            }),
            KindFile::FullyConnected {
                weights,
                bias,
                out_features,
            } => StageKind::FullyConnected(FcParams {
                weights,
                bias,
                out_features,
            }),
            KindFile::Relu => StageKind::Relu,
            KindFile::MaxPool { window, stride, pad } => {
                StageKind::MaxPool(pool_params(window, stride, pad))
            }
            KindFile::AvgPool { window, stride, pad } => {
                StageKind::AvgPool(pool_params(window, stride, pad))
            }
            KindFile::Lrn { size, alpha, beta, k } => StageKind::Lrn(LrnParams {
                size,
                alpha,
                beta,
                k,
            }),
            KindFile::Dropout => StageKind::Dropout,
            KindFile::Softmax => StageKind::Softmax,
            KindFile::Concat => StageKind::Concat,
        }
    }
}

/// Parses a model from JSON text.
pub fn parse_model(json: &str) -> Result<NetworkModel> {
    let file: ModelFile =
        serde_json::from_str(json).map_err(|e| Error::parse(format!("model file: {e}")))?;
    let stages = file
        .stages
        .into_iter()
        .map(|s| Stage::with_inputs(s.name, s.inputs, s.kind.into()))
        .collect();
    let groups = file
        .groups
        .into_iter()
        .map(|g| LayerGroup {
            name: g.name,
            members: g.members,
        })
        .collect();
    NetworkModel::new(file.name, file.input_shape, file.class_count, stages, groups)
}

/// Loads and validates a model description file.
pub fn load_model(path: impl AsRef<Path>) -> Result<NetworkModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::parse(format!("{}: {e}", path.display())))?;
    parse_model(&text).map_err(|e| Error::parse(format!("{}: {e}", path.display())))
}
