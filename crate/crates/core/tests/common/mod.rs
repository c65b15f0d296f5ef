//! Reference implementations shared between the property suites and the
//! acceptance run: literal nested-loop kernels, an element-tagging traffic
//! simulator driven by generator-side bookkeeping, and a quadratic Pareto
//! scan. Everything here favors obviousness over speed.

#![allow(dead_code)]

use std::collections::HashSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use qsc_core::net::{ConvParams, FcParams, LayerGroup, LrnParams, PoolParams, Stage, StageKind};
use qsc_core::{NetworkModel, Tensor, TrafficMode};

/// Literal cross-correlation with explicit zero padding: seven nested
/// loops, no reordering, no skipping.
pub fn naive_conv2d(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    stride: (usize, usize),
    pad: (usize, usize),
) -> Tensor {
    let &[n, c, h, w] = input.shape() else { panic!("rank") };
    let &[k, _, r, s] = weights.shape() else { panic!("rank") };
    let oh = (h + 2 * pad.0 - r) / stride.0 + 1;
    let ow = (w + 2 * pad.1 - s) / stride.1 + 1;
    let x = input.data();
    let wt = weights.data();
    let b = bias.data();
    let mut out = vec![0.0; n * k * oh * ow];
    for ni in 0..n {
        for ki in 0..k {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[ki];
                    for ci in 0..c {
                        for ry in 0..r {
                            for sx in 0..s {
                                let iy = (oy * stride.0 + ry) as isize - pad.0 as isize;
                                let ix = (ox * stride.1 + sx) as isize - pad.1 as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue; // zero padding contributes nothing
                                }
                                let xi = ((ni * c + ci) * h + iy as usize) * w + ix as usize;
                                let wi = ((ki * c + ci) * r + ry) * s + sx;
                                acc += x[xi] * wt[wi];
                            }
                        }
                    }
                    out[((ni * k + ki) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    Tensor::from_vec(vec![n, k, oh, ow], out).unwrap()
}

pub fn naive_fully_connected(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Tensor {
    let n = input.shape()[0];
    let in_len = input.item_len();
    let &[out_len, _] = weights.shape() else { panic!("rank") };
    let x = input.data();
    let wt = weights.data();
    let b = bias.data();
    let mut out = vec![0.0; n * out_len];
    for ni in 0..n {
        for oi in 0..out_len {
            let mut acc = b[oi];
            for ii in 0..in_len {
                acc += x[ni * in_len + ii] * wt[oi * in_len + ii];
            }
            out[ni * out_len + oi] = acc;
        }
    }
    Tensor::from_vec(vec![n, out_len], out).unwrap()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

pub fn assert_close(got: &Tensor, want: &Tensor, rel_tol: f64, what: &str) {
    assert_eq!(got.shape(), want.shape(), "{what}: shape");
    for (i, (&g, &e)) in got.data().iter().zip(want.data()).enumerate() {
        let rel = (g - e).abs() / e.abs().max(1.0);
        assert!(
            rel <= rel_tol,
            "{what}: element {i}: got {g}, want {e} (relative {rel:e})"
        );
    }
}

/// O(n^2) dominance scan: a point survives iff no other point is at most
/// as expensive and at least as accurate with one inequality strict.
pub fn naive_pareto(points: &[(u64, f64)]) -> Vec<usize> {
    let mut keep = Vec::new();
    'outer: for (i, &(ti, ai)) in points.iter().enumerate() {
        for &(tj, aj) in points.iter() {
            if tj <= ti && aj >= ai && (tj < ti || aj > ai) {
                continue 'outer;
            }
        }
        keep.push(i);
    }
    keep
}

/// A generated stage together with the shapes the generator tracked for
/// it, independent of the model's own shape inference.
pub struct GenStage {
    pub stage: Stage,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
    pub weight_elems: usize,
}

/// Random valid windowed geometry for the given input extent: stride never
/// exceeds the window (every element is covered) and the extent divides
/// exactly (the model rejects misfits).
pub fn window_geometry(
    rng: &mut ChaCha8Rng,
    h: usize,
    w: usize,
) -> (usize, usize, usize, usize, usize, usize) {
    for _ in 0..64 {
        let kh = rng.gen_range(1..=h.min(5));
        let kw = rng.gen_range(1..=w.min(5));
        let sh = rng.gen_range(1..=kh);
        let sw = rng.gen_range(1..=kw);
        let ph = rng.gen_range(0..kh.min(2));
        let pw = rng.gen_range(0..kw.min(2));
        if (h + 2 * ph - kh) % sh == 0 && (w + 2 * pw - kw) % sw == 0 {
            return (kh, kw, sh, sw, ph, pw);
        }
    }
    (1, 1, 1, 1, 0, 0)
}

/// Random chain network of 1..=8 groups, 1..=3 stages each, with the
/// generator's own shape and weight-count bookkeeping alongside.
pub fn chain(rng: &mut ChaCha8Rng, id: usize) -> (NetworkModel, Vec<GenStage>) {
    let input_shape = vec![
        rng.gen_range(1..=3),
        rng.gen_range(4..=10),
        rng.gen_range(4..=10),
    ];
    let group_count = rng.gen_range(1..=8);
    let mut gen_stages: Vec<GenStage> = Vec::new();
    let mut groups = Vec::new();
    let mut shape = input_shape.clone();
    let mut serial = 0usize;
    for g in 0..group_count {
        let mut members = Vec::new();
        for _ in 0..rng.gen_range(1..=3) {
            let name = format!("s{serial}");
            serial += 1;
            let rank3 = shape.len() == 3;
            let (kind, out_shape, weight_elems) = if rank3 && rng.gen_bool(0.6) {
                let (c, h, w) = (shape[0], shape[1], shape[2]);
                match rng.gen_range(0..4) {
                    0 => {
                        let (kh, kw, sh, sw, ph, pw) = window_geometry(rng, h, w);
                        let k = rng.gen_range(1..=4);
                        let oh = (h + 2 * ph - kh) / sh + 1;
                        let ow = (w + 2 * pw - kw) / sw + 1;
                        (
                            StageKind::Conv(ConvParams {
                                weights: format!("{name}_w"),
                                bias: format!("{name}_b"),
                                out_channels: k,
                                kernel: (kh, kw),
                                stride: (sh, sw),
                                pad: (ph, pw),
                            }),
                            vec![k, oh, ow],
                            k * c * kh * kw + k,
                        )
                    }
                    1 | 2 => {
                        let (kh, kw, sh, sw, ph, pw) = window_geometry(rng, h, w);
                        let oh = (h + 2 * ph - kh) / sh + 1;
                        let ow = (w + 2 * pw - kw) / sw + 1;
                        let params = PoolParams {
                            window: (kh, kw),
                            stride: (sh, sw),
                            pad: (ph, pw),
                        };
                        let kind = if rng.gen_bool(0.5) {
                            StageKind::MaxPool(params)
                        } else {
                            StageKind::AvgPool(params)
                        };
                        (kind, vec![c, oh, ow], 0)
                    }
                    _ => (StageKind::Lrn(LrnParams::default()), vec![c, h, w], 0),
                }
            } else {
                match rng.gen_range(0..3) {
                    0 => {
                        let out = rng.gen_range(1..=12);
                        (
                            StageKind::FullyConnected(FcParams {
                                weights: format!("{name}_w"),
                                bias: format!("{name}_b"),
                                out_features: out,
                            }),
                            vec![out],
                            out * shape.iter().product::<usize>() + out,
                        )
                    }
                    1 => (StageKind::Relu, shape.clone(), 0),
                    _ => (StageKind::Dropout, shape.clone(), 0),
                }
            };
            gen_stages.push(GenStage {
                stage: Stage::new(&name, kind),
                in_shape: shape.clone(),
                out_shape: out_shape.clone(),
                weight_elems,
            });
            members.push(name);
            shape = out_shape;
        }
        groups.push(LayerGroup {
            name: format!("g{g}"),
            members,
        });
    }
    let class_count = shape.iter().product();
    let stages = gen_stages.iter().map(|g| g.stage.clone()).collect();
    let model = NetworkModel::new(format!("chain{id}"), input_shape, class_count, stages, groups)
        .expect("generated chain must validate");
    (model, gen_stages)
}

/// Marks every element of `shape` that one windowed pass over it touches.
fn mark_windowed(
    touched: &mut HashSet<(usize, usize)>,
    stage: usize,
    shape: &[usize],
    window: (usize, usize),
    stride: (usize, usize),
    pad: (usize, usize),
) {
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let oh = (h + 2 * pad.0 - window.0) / stride.0 + 1;
    let ow = (w + 2 * pad.1 - window.1) / stride.1 + 1;
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                for ky in 0..window.0 {
                    for kx in 0..window.1 {
                        let iy = (oy * stride.0 + ky) as isize - pad.0 as isize;
                        let ix = (ox * stride.1 + kx) as isize - pad.1 as isize;
                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                            continue;
                        }
                        touched.insert((stage, (ci * h + iy as usize) * w + ix as usize));
                    }
                }
            }
        }
    }
}

/// First-touch counts for one group of a chain, from the generator's own
/// bookkeeping. Data reads tag the elements of the producing stage's
/// output that members actually touch; writes are the exit stage's output;
/// weight reads are first touches per image (single) or per batch (batch).
pub fn simulate_group(
    gen_stages: &[GenStage],
    members: std::ops::Range<usize>,
    batch: usize,
    mode: TrafficMode,
) -> (u64, u64, u64) {
    let mut touched: HashSet<(usize, usize)> = HashSet::new();
    for s in members.clone() {
        // In a chain, stage s reads stage s-1 (or the network input); the
        // read crosses the group boundary only for the first member.
        if s != members.start {
            continue;
        }
        let gs = &gen_stages[s];
        match &gs.stage.kind {
            StageKind::Conv(p) => {
                mark_windowed(&mut touched, s, &gs.in_shape, p.kernel, p.stride, p.pad)
            }
            StageKind::MaxPool(p) | StageKind::AvgPool(p) => {
                mark_windowed(&mut touched, s, &gs.in_shape, p.window, p.stride, p.pad)
            }
            // Every remaining kind reads its whole input.
            _ => {
                for e in 0..gs.in_shape.iter().product::<usize>() {
                    touched.insert((s, e));
                }
            }
        }
    }
    let exit = members.end - 1;
    let data_reads = touched.len() as u64 * batch as u64;
    let data_writes = gen_stages[exit].out_shape.iter().product::<usize>() as u64 * batch as u64;
    let weight_elems: u64 = members.map(|s| gen_stages[s].weight_elems as u64).sum();
    let weight_reads = match mode {
        TrafficMode::Single => weight_elems * batch as u64,
        TrafficMode::Batch => weight_elems,
    };
    (data_reads, data_writes, weight_reads)
}
