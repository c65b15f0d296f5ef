//! File-format round-trips: weight binaries, IDX datasets, precision
//! config texts, and trace CSV/JSON emit-parse identities.

use std::io::Write as _;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use qsc_core::io::{
    load_idx, load_weights, parse_model, save_weights, trace_from_json, trace_rows_from_csv,
    trace_to_csv, trace_to_json,
};
use qsc_core::net::{FcParams, LayerGroup, Stage, StageKind};
use qsc_core::{
    DescentOptions, Explorer, FixedPointFormat, NetworkModel, PrecisionConfig, Sample, Tensor,
    TrafficMode, WeightStore,
};

fn f32_grid(rng: &mut ChaCha8Rng) -> f64 {
    // Arbitrary but exactly f32-representable values.
    (rng.gen_range(-1_000_000i32..1_000_000) as f32 / 256.0) as f64
}

#[test]
fn weight_file_round_trips_random_stores_bit_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF11E);
    let dir = tempfile::tempdir().unwrap();
    for case in 0..25 {
        let mut store = WeightStore::new();
        for t in 0..rng.gen_range(0..6) {
            let rank = rng.gen_range(1..=4);
            let shape: Vec<usize> = (0..rank).map(|_| rng.gen_range(1..=5)).collect();
            let len: usize = shape.iter().product();
            let data: Vec<f64> = (0..len).map(|_| f32_grid(&mut rng)).collect();
            store
                .insert(format!("t{t}"), Tensor::from_vec(shape, data).unwrap())
                .unwrap();
        }
        let path = dir.path().join(format!("store{case}.qscw"));
        save_weights(&path, &store).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(back.len(), store.len());
        for (name, tensor) in store.iter() {
            let got = back.get(name).unwrap();
            assert_eq!(got.shape(), tensor.shape(), "{name}");
            let same = got
                .data()
                .iter()
                .zip(tensor.data())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same, "{name}: payload changed across round-trip");
        }
    }
}

fn write_idx_pair(
    dir: &std::path::Path,
    images: &[[u8; 4]],
    labels: &[u8],
) -> (std::path::PathBuf, std::path::PathBuf) {
    let img_path = dir.join("imgs");
    let lab_path = dir.join("labs");
    let mut img = Vec::new();
    img.extend_from_slice(&0x0000_0803u32.to_be_bytes());
    img.extend_from_slice(&(images.len() as u32).to_be_bytes());
    img.extend_from_slice(&2u32.to_be_bytes());
    img.extend_from_slice(&2u32.to_be_bytes());
    for px in images {
        img.extend_from_slice(px);
    }
    std::fs::File::create(&img_path)
        .unwrap()
        .write_all(&img)
        .unwrap();
    let mut lab = Vec::new();
    lab.extend_from_slice(&0x0000_0801u32.to_be_bytes());
    lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    std::fs::File::create(&lab_path)
        .unwrap()
        .write_all(&lab)
        .unwrap();
    (img_path, lab_path)
}

#[test]
fn idx_pair_loads_scaled_samples_in_file_order() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = write_idx_pair(dir.path(), &[[0, 255, 51, 102], [255, 0, 0, 255]], &[7, 2]);
    let samples = load_idx(&img, &lab).unwrap();
    assert_eq!(samples.len(), 2);
    assert_eq!(samples[0].label, 7);
    assert_eq!(samples[1].label, 2);
    assert_eq!(samples[0].image.shape(), &[1, 2, 2]);
    assert_eq!(
        samples[0].image.data(),
        &[0.0, 1.0, 51.0 / 255.0, 102.0 / 255.0]
    );
    assert_eq!(samples[1].image.data(), &[1.0, 0.0, 0.0, 1.0]);
}

#[test]
fn idx_count_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = write_idx_pair(dir.path(), &[[0, 0, 0, 0]], &[1, 2]);
    let err = load_idx(&img, &lab).unwrap_err();
    assert!(err.to_string().contains("1"), "{err}");
    assert!(err.to_string().contains("2"), "{err}");
}

fn random_config(rng: &mut ChaCha8Rng, names: &[&str]) -> PrecisionConfig {
    let mut cfg = PrecisionConfig::full_precision(names.iter().copied());
    for g in 0..cfg.len() {
        if rng.gen_bool(0.8) {
            cfg.group_mut(g).weights = Some(
                FixedPointFormat::new(rng.gen_range(1..=8), rng.gen_range(0..=12)).unwrap(),
            );
        }
        if rng.gen_bool(0.8) {
            cfg.group_mut(g).data = Some(
                FixedPointFormat::new(rng.gen_range(1..=8), rng.gen_range(0..=12)).unwrap(),
            );
        }
    }
    cfg
}

#[test]
fn config_text_forms_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xCF6);
    let names = ["conv1", "conv2", "ip1", "ip2"];
    for _ in 0..50 {
        let cfg = random_config(&mut rng, &names);
        let doc = cfg.to_document();
        assert_eq!(PrecisionConfig::parse_document(&names, &doc).unwrap(), cfg);
        let compact = cfg.to_compact();
        assert_eq!(PrecisionConfig::parse_compact(&names, &compact).unwrap(), cfg);
    }
    // Dashed form sets both sides at once.
    let cfg = PrecisionConfig::parse_dashed(&names, "1.1-3.1-3.0-full").unwrap();
    assert_eq!(cfg.weights_dashed(), "1.1-3.1-3.0-full");
    assert_eq!(cfg.data_dashed(), "1.1-3.1-3.0-full");
}

/// A trace produced by real descent on a tiny FC network, exercising all
/// record kinds, Pareto flags, and adopted markers.
fn real_trace() -> qsc_core::ExplorationTrace {
    let stages = vec![Stage::new(
        "fc",
        StageKind::FullyConnected(FcParams {
            weights: "fc_w".into(),
            bias: "fc_b".into(),
            out_features: 2,
        }),
    )];
    let groups = vec![LayerGroup {
        name: "fc".into(),
        members: vec!["fc".into()],
    }];
    let model = NetworkModel::new("t", vec![3], 2, stages, groups).unwrap();
    let mut store = WeightStore::new();
    store
        .insert(
            "fc_w",
            Tensor::from_vec(vec![2, 3], vec![0.5, -0.25, 0.75, -0.5, 0.25, -0.75]).unwrap(),
        )
        .unwrap();
    store
        .insert("fc_b", Tensor::from_vec(vec![2], vec![0.1, -0.1]).unwrap())
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples: Vec<Sample> = (0..32)
        .map(|_| {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let label = usize::from(x[0] < 0.0);
            Sample::new(Tensor::from_vec(vec![3], x).unwrap(), label)
        })
        .collect();
    let explorer = Explorer::new(&model, &store, &samples, 8, 2, TrafficMode::Batch).unwrap();
    let init = PrecisionConfig::uniform_for(
        model.group_names(),
        Some(FixedPointFormat::new(1, 4).unwrap()),
        Some(FixedPointFormat::new(2, 3).unwrap()),
    );
    explorer
        .greedy_descent(&init, &DescentOptions::default())
        .unwrap()
}

#[test]
fn trace_csv_emit_parse_emit_is_byte_identical() {
    let trace = real_trace();
    let csv = trace_to_csv(&trace).unwrap();
    let rows = trace_rows_from_csv(&csv).unwrap();
    assert_eq!(rows.len(), trace.records.len());
    // Re-serializing the parsed rows must reproduce the emitted bytes.
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        w.serialize(row).unwrap();
    }
    let again = String::from_utf8(w.into_inner().unwrap()).unwrap();
    assert_eq!(csv, again);
}

#[test]
fn trace_json_reload_preserves_structures_exactly() {
    let trace = real_trace();
    let json = trace_to_json(&trace).unwrap();
    let back = trace_from_json(&json).unwrap();
    assert_eq!(back, trace);
}

#[test]
fn model_file_parses_groups_and_rejects_double_assignment() {
    let good = r#"{
        "name": "m", "input_shape": [4], "class_count": 2,
        "stages": [
            {"name": "ip", "kind": "fully_connected", "weights": "w", "bias": "b", "out_features": 2},
            {"name": "sm", "kind": "softmax"}
        ],
        "groups": [{"name": "ip", "members": ["ip", "sm"]}]
    }"#;
    let model = parse_model(good).unwrap();
    assert_eq!(model.group_count(), 1);

    let double = good.replace(
        r#""groups": [{"name": "ip", "members": ["ip", "sm"]}]"#,
        r#""groups": [{"name": "a", "members": ["ip"]}, {"name": "b", "members": ["ip", "sm"]}]"#,
    );
    let err = parse_model(&double).unwrap_err();
    assert!(err.to_string().contains("ip"), "{err}");
}
