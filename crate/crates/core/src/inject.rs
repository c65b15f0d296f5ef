//! Precision injection and accuracy measurement.
//!
//! Reduced precision is modeled by rounding values onto the chosen
//! fixed-point grid at the places where they would live in memory: weights
//! once up front, activations at each group boundary. The arithmetic in
//! between stays in double precision, so the only effect measured is the
//! representation error of the stored tensors.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::fixed::quantize_tensor;
use crate::net::{run_network, NetworkModel, WeightStore};
use crate::precision::PrecisionConfig;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// One labeled image: an item-shaped tensor (no batch axis) and its class.
#[derive(Debug, Clone)]
pub struct Sample {
    pub image: Tensor,
    pub label: usize,
}

impl Sample {
    pub fn new(image: Tensor, label: usize) -> Self {
        Sample { image, label }
    }
}

/// Top-1 accuracy of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyResult {
    /// Fraction of images whose highest-scoring class matches the label.
    pub top1: f64,
    /// Number of images evaluated.
    pub images: usize,
    /// `top1 / baseline_top1`, when a baseline was supplied.
    pub relative: Option<f64>,
}

/// Returns a store with every weight tensor rounded to its group's weight
/// format; `None` sides pass through untouched.
///
/// The store must carry exactly the tensors the model references: a missing
/// or misshapen tensor, a tensor no stage uses, or one shared by two stages
/// is an error (sharing would make per-group precision ambiguous).
pub fn apply_weight_quantization(
    model: &NetworkModel,
    store: &WeightStore,
    config: &PrecisionConfig,
) -> Result<WeightStore> {
    config.check_alignment(model)?;
    model.check_weights(store)?;

    let mut owner: HashMap<&str, usize> = HashMap::new();
    for stage in 0..model.stages().len() {
        let Some((w, b)) = model.stage_weight_names(stage) else {
            continue;
        };
        for name in [w, b] {
            if owner.insert(name, stage).is_some() {
                return Err(Error::Weights(format!(
                    "tensor {name:?} is referenced by more than one stage"
                )));
            }
        }
    }
    for name in store.names() {
        if !owner.contains_key(name.as_str()) {
            return Err(Error::Weights(format!(
                "tensor {name:?} is not used by any stage of the model"
            )));
        }
    }

    let mut out = WeightStore::new();
    for (name, tensor) in store.iter() {
        let stage = owner[name.as_str()];
        let group = model.group_of_stage(stage);
        let quantized = match config.group(group).weights {
            Some(fmt) => quantize_tensor(tensor, fmt)
                .map_err(|e| Error::Weights(format!("tensor {name:?}: {e}")))?,
            None => tensor.clone(),
        };
        out.insert(name.clone(), quantized)?;
    }
    Ok(out)
}

/// Forward pass under a precision assignment, quantizing weights first.
///
/// For repeated evaluations of one assignment prefer [`evaluate`], which
/// quantizes the weights once.
pub fn quantized_forward(
    model: &NetworkModel,
    store: &WeightStore,
    config: &PrecisionConfig,
    input: &Tensor,
) -> Result<Tensor> {
    let quantized = apply_weight_quantization(model, store, config)?;
    run_quantized(model, &quantized, config, input)
}

/// Forward pass with already-quantized weights: rounds the input with the
/// first group's data format (the input is data entering that group), then
/// rounds each group's exit tensor with its own data format.
pub(crate) fn run_quantized(
    model: &NetworkModel,
    quantized_store: &WeightStore,
    config: &PrecisionConfig,
    input: &Tensor,
) -> Result<Tensor> {
    let input_q = match config.group(0).data {
        Some(fmt) => quantize_tensor(input, fmt)?,
        None => input.clone(),
    };
    run_network(model, quantized_store, &input_q, |group, t| {
        match config.group(group).data {
            Some(fmt) => quantize_tensor(&t, fmt),
            None => Ok(t),
        }
    })
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in row.iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Measures top-1 accuracy of the model under `config`.
///
/// Weights are quantized once; samples are run through the network in
/// batches of `batch_size` (a throughput knob only — results are identical
/// for any batch size). When `baseline` is given, the result also carries
/// the accuracy relative to it.
pub fn evaluate(
    model: &NetworkModel,
    store: &WeightStore,
    config: &PrecisionConfig,
    samples: &[Sample],
    batch_size: usize,
    baseline: Option<f64>,
) -> Result<AccuracyResult> {
    if samples.is_empty() {
        return Err(Error::Dataset("no samples to evaluate".into()));
    }
    if batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    if let Some(b) = baseline {
        if !(b > 0.0) {
            return Err(Error::config(format!(
                "baseline accuracy must be positive, got {b}"
            )));
        }
    }
    let quantized = apply_weight_quantization(model, store, config)?;
    let item_shape = model.input_shape();
    let item_len: usize = item_shape.iter().product();
    let classes = model.class_count();

    let mut correct = 0usize;
    for (chunk_idx, chunk) in samples.chunks(batch_size).enumerate() {
        let mut data = Vec::with_capacity(chunk.len() * item_len);
        for (i, s) in chunk.iter().enumerate() {
            if s.image.shape() != item_shape {
                return Err(Error::Dataset(format!(
                    "sample {} has shape {:?}, model expects {:?}",
                    chunk_idx * batch_size + i,
                    s.image.shape(),
                    item_shape
                )));
            }
            if s.label >= classes {
                return Err(Error::Dataset(format!(
                    "sample {} has label {}, model has {} classes",
                    chunk_idx * batch_size + i,
                    s.label,
                    classes
                )));
            }
            data.extend_from_slice(s.image.data());
        }
        let mut shape = vec![chunk.len()];
        shape.extend_from_slice(item_shape);
        let batch = Tensor::from_vec(shape, data)?;
        let scores = run_quantized(model, &quantized, config, &batch)?;
        for (row, s) in scores.data().chunks(scores.item_len()).zip(chunk) {
            if argmax(row) == s.label {
                correct += 1;
            }
        }
    }
    let top1 = correct as f64 / samples.len() as f64;
    Ok(AccuracyResult {
        top1,
        images: samples.len(),
        relative: baseline.map(|b| top1 / b),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed::FixedPointFormat;
    use crate::net::{FcParams, LayerGroup, Stage, StageKind};

    /// 2-class model: score_0 = w·x + b over 2 inputs, identity-ish.
    fn toy() -> (NetworkModel, WeightStore) {
        let model = NetworkModel::new(
            "toy",
            vec![2],
            2,
            vec![Stage::new(
                "fc",
                StageKind::FullyConnected(FcParams {
                    weights: "fc_w".into(),
                    bias: "fc_b".into(),
                    out_features: 2,
                }),
            )],
            vec![LayerGroup {
                name: "fc".into(),
                members: vec!["fc".into()],
            }],
        )
        .unwrap();
        let mut store = WeightStore::new();
        store
            .insert(
                "fc_w",
                Tensor::from_vec(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            )
            .unwrap();
        store
            .insert("fc_b", Tensor::from_vec(vec![2], vec![0.0, 0.0]).unwrap())
            .unwrap();
        (model, store)
    }

    fn cfg_with(model: &NetworkModel, weights: Option<&str>, data: Option<&str>) -> PrecisionConfig {
        let mut cfg = PrecisionConfig::for_model(model);
        for i in 0..cfg.len() {
            cfg.group_mut(i).weights = weights.map(|s| s.parse().unwrap());
            cfg.group_mut(i).data = data.map(|s| s.parse().unwrap());
        }
        cfg
    }

    #[test]
    fn weight_quantization_rounds_onto_grid() {
        let (model, _) = toy();
        // 0.3 at Q1.2 rounds to 0.25.
        let mut store2 = WeightStore::new();
        store2
            .insert(
                "fc_w",
                Tensor::from_vec(vec![2, 2], vec![0.3, 0.0, 0.0, 0.3]).unwrap(),
            )
            .unwrap();
        store2
            .insert("fc_b", Tensor::from_vec(vec![2], vec![0.3, -0.3]).unwrap())
            .unwrap();
        let cfg = cfg_with(&model, Some("1.2"), None);
        let q = apply_weight_quantization(&model, &store2, &cfg).unwrap();
        assert_eq!(q.get("fc_w").unwrap().data()[0], 0.25);
        assert_eq!(q.get("fc_b").unwrap().data(), &[0.25, -0.25]);
    }

    #[test]
    fn unreferenced_store_tensor_is_rejected() {
        let (model, mut store) = toy();
        store.insert("stray", Tensor::zeros(vec![3])).unwrap();
        let cfg = PrecisionConfig::for_model(&model);
        let err = apply_weight_quantization(&model, &store, &cfg).unwrap_err();
        assert!(err.to_string().contains("stray"), "{err}");
    }

    #[test]
    fn full_precision_evaluation_is_exact() {
        let (model, store) = toy();
        let samples = vec![
            Sample::new(Tensor::from_vec(vec![2], vec![1.0, 0.0]).unwrap(), 0),
            Sample::new(Tensor::from_vec(vec![2], vec![0.0, 1.0]).unwrap(), 1),
            Sample::new(Tensor::from_vec(vec![2], vec![0.9, 0.1]).unwrap(), 0),
            Sample::new(Tensor::from_vec(vec![2], vec![0.1, 0.9]).unwrap(), 1),
        ];
        let cfg = PrecisionConfig::for_model(&model);
        let r = evaluate(&model, &store, &cfg, &samples, 3, None).unwrap();
        assert_eq!(r.top1, 1.0);
        assert_eq!(r.images, 4);
        assert_eq!(r.relative, None);
    }

    #[test]
    fn batch_size_does_not_change_results() {
        let (model, store) = toy();
        let samples: Vec<Sample> = (0..7)
            .map(|i| {
                let x = i as f64 / 7.0;
                Sample::new(
                    Tensor::from_vec(vec![2], vec![x, 1.0 - x]).unwrap(),
                    usize::from(1.0 - x > x),
                )
            })
            .collect();
        let cfg = cfg_with(&model, Some("1.2"), Some("2.3"));
        let a = evaluate(&model, &store, &cfg, &samples, 1, None).unwrap();
        let b = evaluate(&model, &store, &cfg, &samples, 7, None).unwrap();
        assert_eq!(a.top1, b.top1);
    }

    #[test]
    fn coarse_data_format_breaks_fine_distinctions() {
        let (model, store) = toy();
        // 0.6 vs 0.4: distinguishable at full precision, both round to the
        // same code at Q1.0 (step 1, range [-1, 0]).
        let samples = vec![Sample::new(
            Tensor::from_vec(vec![2], vec![0.6, 0.4]).unwrap(),
            0,
        )];
        let full = evaluate(
            &model,
            &store,
            &PrecisionConfig::for_model(&model),
            &samples,
            1,
            None,
        )
        .unwrap();
        assert_eq!(full.top1, 1.0);
        let coarse = cfg_with(&model, None, Some("1.0"));
        let r = evaluate(&model, &store, &coarse, &samples, 1, Some(full.top1)).unwrap();
        // Both inputs saturate to the same value; argmax ties to class 0, so
        // construct the failing direction explicitly.
        let samples2 = vec![Sample::new(
            Tensor::from_vec(vec![2], vec![0.4, 0.6]).unwrap(),
            1,
        )];
        let r2 = evaluate(&model, &store, &coarse, &samples2, 1, Some(full.top1)).unwrap();
        assert_eq!(r2.top1, 0.0);
        assert_eq!(r.relative, Some(r.top1));
    }

    #[test]
    fn relative_accuracy_uses_supplied_baseline() {
        let (model, store) = toy();
        let samples = vec![
            Sample::new(Tensor::from_vec(vec![2], vec![1.0, 0.0]).unwrap(), 0),
            Sample::new(Tensor::from_vec(vec![2], vec![0.0, 1.0]).unwrap(), 0),
        ];
        let cfg = PrecisionConfig::for_model(&model);
        let r = evaluate(&model, &store, &cfg, &samples, 2, Some(0.8)).unwrap();
        assert_eq!(r.top1, 0.5);
        assert_eq!(r.relative, Some(0.5 / 0.8));
    }

    #[test]
    fn label_out_of_range_is_reported_with_index() {
        let (model, store) = toy();
        let samples = vec![Sample::new(
            Tensor::from_vec(vec![2], vec![1.0, 0.0]).unwrap(),
            2,
        )];
        let cfg = PrecisionConfig::for_model(&model);
        let err = evaluate(&model, &store, &cfg, &samples, 1, None).unwrap_err();
        assert!(err.to_string().contains("label 2"), "{err}");
    }
}
