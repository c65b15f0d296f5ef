//! Forward evaluation of network stages on batched tensors.
//!
//! All tensors carry a leading batch axis. Arithmetic is double precision
//! throughout; reduced precision is modeled elsewhere by rounding tensors at
//! group boundaries, never by changing the arithmetic here.

use crate::error::{Error, Result};
use crate::net::model::{windowed_extent, InputRef, LrnParams, NetworkModel, StageKind, WeightStore};
use crate::tensor::Tensor;

fn batch_of(t: &Tensor, rank: usize, what: &str) -> Result<(usize, Vec<usize>)> {
    let shape = t.shape();
    if shape.len() != rank + 1 || shape[0] == 0 {
        return Err(Error::config(format!(
            "{what} expects a batched rank-{rank} tensor, got shape {shape:?}"
        )));
    }
    Ok((shape[0], shape[1..].to_vec()))
}

/// 2-D cross-correlation with zero padding.
///
/// `input` is `[N, C, H, W]`, `weights` `[K, C, R, S]`, `bias` `[K]`; the
/// output is `[N, K, OH, OW]` with the floor-division extent rule.
pub fn forward_conv2d(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    stride: (usize, usize),
    pad: (usize, usize),
) -> Result<Tensor> {
    let (n, in_item) = batch_of(input, 3, "conv")?;
    let [c, h, w] = in_item[..] else { unreachable!() };
    let &[k, wc, r, s] = weights.shape() else {
        return Err(Error::config(format!(
            "conv weights must be rank 4, got shape {:?}",
            weights.shape()
        )));
    };
    if wc != c {
        return Err(Error::config(format!(
            "conv weights expect {wc} input channels, input has {c}"
        )));
    }
    if bias.shape() != [k] {
        return Err(Error::config(format!(
            "conv bias shape {:?} does not match {k} output channels",
            bias.shape()
        )));
    }
    let (sh, sw) = stride;
    let (ph, pw) = pad;
    let oh = windowed_extent(h, r, sh, ph)
        .ok_or_else(|| Error::config(format!("conv kernel {r}x{s} does not fit {h}x{w} input")))?;
    let ow = windowed_extent(w, s, sw, pw)
        .ok_or_else(|| Error::config(format!("conv kernel {r}x{s} does not fit {h}x{w} input")))?;

    let in_data = input.data();
    let w_data = weights.data();
    let b_data = bias.data();
    let mut out = vec![0.0f64; n * k * oh * ow];

    for ni in 0..n {
        let in_n = ni * c * h * w;
        let out_n = ni * k * oh * ow;
        for ki in 0..k {
            let out_k = out_n + ki * oh * ow;
            out[out_k..out_k + oh * ow].fill(b_data[ki]);
            for ci in 0..c {
                let in_c = in_n + ci * h * w;
                let w_c = (ki * c + ci) * r * s;
                for ri in 0..r {
                    // Rows of the output for which input row oh*sh + ri - ph
                    // lands inside the unpadded image.
                    let oh_lo = if ph > ri { (ph - ri).div_ceil(sh) } else { 0 };
                    if h + ph <= ri {
                        continue;
                    }
                    let oh_hi = ((h - 1 + ph - ri) / sh).min(oh - 1);
                    if oh_lo > oh_hi {
                        continue;
                    }
                    for si in 0..s {
                        let wv = w_data[w_c + ri * s + si];
                        if wv == 0.0 {
                            continue;
                        }
                        let ow_lo = if pw > si { (pw - si).div_ceil(sw) } else { 0 };
                        if w + pw <= si {
                            continue;
                        }
                        let ow_hi = ((w - 1 + pw - si) / sw).min(ow - 1);
                        if ow_lo > ow_hi {
                            continue;
                        }
                        for ohi in oh_lo..=oh_hi {
                            let in_row = in_c + (ohi * sh + ri - ph) * w;
                            let out_row = out_k + ohi * ow;
                            let iw0 = in_row + ow_lo * sw + si - pw;
                            if sw == 1 {
                                let src = &in_data[iw0..iw0 + ow_hi - ow_lo + 1];
                                let dst = &mut out[out_row + ow_lo..=out_row + ow_hi];
                                for (d, x) in dst.iter_mut().zip(src) {
                                    *d += wv * x;
                                }
                            } else {
                                let mut iw = iw0;
                                for owi in ow_lo..=ow_hi {
                                    out[out_row + owi] += wv * in_data[iw];
                                    iw += sw;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(vec![n, k, oh, ow], out)
}

/// Affine layer: flattens each item and applies `weights * x + bias`.
///
/// `weights` is `[O, I]` (row per output), `bias` `[O]`.
pub fn forward_fully_connected(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let shape = input.shape();
    if shape.len() < 2 || shape[0] == 0 {
        return Err(Error::config(format!(
            "fully connected expects a batched input, got shape {shape:?}"
        )));
    }
    let n = shape[0];
    let in_len = input.item_len();
    let &[o, i_len] = weights.shape() else {
        return Err(Error::config(format!(
            "fully connected weights must be rank 2, got shape {:?}",
            weights.shape()
        )));
    };
    if i_len != in_len {
        return Err(Error::config(format!(
            "fully connected weights expect {i_len} inputs, item has {in_len}"
        )));
    }
    if bias.shape() != [o] {
        return Err(Error::config(format!(
            "fully connected bias shape {:?} does not match {o} outputs",
            bias.shape()
        )));
    }
    let in_data = input.data();
    let w_data = weights.data();
    let b_data = bias.data();
    let mut out = vec![0.0f64; n * o];
    for ni in 0..n {
        let x = &in_data[ni * in_len..(ni + 1) * in_len];
        for oi in 0..o {
            let row = &w_data[oi * i_len..(oi + 1) * i_len];
            let mut acc = b_data[oi];
            for (wv, xv) in row.iter().zip(x) {
                acc += wv * xv;
            }
            out[ni * o + oi] = acc;
        }
    }
    Tensor::from_vec(vec![n, o], out)
}

/// Elementwise `max(0, x)`.
pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        *v = v.max(0.0);
    }
    out
}

fn pool_prelude(
    input: &Tensor,
    window: (usize, usize),
    stride: (usize, usize),
    pad: (usize, usize),
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let (n, item) = batch_of(input, 3, "pool")?;
    let [c, h, w] = item[..] else { unreachable!() };
    if pad.0 >= window.0 || pad.1 >= window.1 {
        return Err(Error::config(format!(
            "pool pad {pad:?} must be smaller than the window {window:?}"
        )));
    }
    let oh = windowed_extent(h, window.0, stride.0, pad.0)
        .ok_or_else(|| Error::config(format!("pool window {window:?} exceeds {h}x{w} input")))?;
    let ow = windowed_extent(w, window.1, stride.1, pad.1)
        .ok_or_else(|| Error::config(format!("pool window {window:?} exceeds {h}x{w} input")))?;
    Ok((n, c, h, w, oh, ow))
}

/// Windowed maximum; padding positions never contribute.
pub fn max_pool_2d(
    input: &Tensor,
    window: (usize, usize),
    stride: (usize, usize),
    pad: (usize, usize),
) -> Result<Tensor> {
    let (n, c, h, w, oh, ow) = pool_prelude(input, window, stride, pad)?;
    let in_data = input.data();
    let mut out = vec![0.0f64; n * c * oh * ow];
    let mut idx = 0;
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * h * w;
            for ohi in 0..oh {
                let ih_lo = (ohi * stride.0).saturating_sub(pad.0);
                let ih_hi = (ohi * stride.0 + window.0 - pad.0).min(h);
                for owi in 0..ow {
                    let iw_lo = (owi * stride.1).saturating_sub(pad.1);
                    let iw_hi = (owi * stride.1 + window.1 - pad.1).min(w);
                    let mut m = f64::NEG_INFINITY;
                    for ih in ih_lo..ih_hi {
                        for iw in iw_lo..iw_hi {
                            m = m.max(in_data[base + ih * w + iw]);
                        }
                    }
                    out[idx] = m;
                    idx += 1;
                }
            }
        }
    }
    Tensor::from_vec(vec![n, c, oh, ow], out)
}

/// Windowed mean over the positions inside the unpadded input; the divisor
/// is the count of those positions, so edge windows are not diluted by
/// padding.
pub fn avg_pool_2d(
    input: &Tensor,
    window: (usize, usize),
    stride: (usize, usize),
    pad: (usize, usize),
) -> Result<Tensor> {
    let (n, c, h, w, oh, ow) = pool_prelude(input, window, stride, pad)?;
    let in_data = input.data();
    let mut out = vec![0.0f64; n * c * oh * ow];
    let mut idx = 0;
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * h * w;
            for ohi in 0..oh {
                let ih_lo = (ohi * stride.0).saturating_sub(pad.0);
                let ih_hi = (ohi * stride.0 + window.0 - pad.0).min(h);
                for owi in 0..ow {
                    let iw_lo = (owi * stride.1).saturating_sub(pad.1);
                    let iw_hi = (owi * stride.1 + window.1 - pad.1).min(w);
                    let mut sum = 0.0;
                    for ih in ih_lo..ih_hi {
                        for iw in iw_lo..iw_hi {
                            sum += in_data[base + ih * w + iw];
                        }
                    }
                    let count = (ih_hi - ih_lo) * (iw_hi - iw_lo);
                    out[idx] = sum / count as f64;
                    idx += 1;
                }
            }
        }
    }
    Tensor::from_vec(vec![n, c, oh, ow], out)
}

/// Local response normalization across channels:
/// `b[c] = a[c] / (k + alpha/size * sum_{j in window(c)} a[j]^2)^beta`
/// where the window spans `size` channels centred on `c`, clipped to the
/// channel range.
pub fn lrn_across_channels(input: &Tensor, params: &LrnParams) -> Result<Tensor> {
    let (n, item) = batch_of(input, 3, "lrn")?;
    let [c, h, w] = item[..] else { unreachable!() };
    if params.size == 0 || params.size % 2 == 0 {
        return Err(Error::config(format!(
            "lrn window size must be odd and positive, got {}",
            params.size
        )));
    }
    let half = params.size / 2;
    let plane = h * w;
    let in_data = input.data();
    let mut out = vec![0.0f64; in_data.len()];
    for ni in 0..n {
        let base_n = ni * c * plane;
        for ci in 0..c {
            let lo = ci.saturating_sub(half);
            let hi = (ci + half + 1).min(c);
            for p in 0..plane {
                let mut sum = 0.0;
                for j in lo..hi {
                    let a = in_data[base_n + j * plane + p];
                    sum += a * a;
                }
                let denom = (params.k + params.alpha / params.size as f64 * sum).powf(params.beta);
                out[base_n + ci * plane + p] = in_data[base_n + ci * plane + p] / denom;
            }
        }
    }
    Tensor::from_vec(input.shape().to_vec(), out)
}

/// Numerically stable softmax over each item.
pub fn forward_softmax(input: &Tensor) -> Result<Tensor> {
    let shape = input.shape();
    if shape.len() < 2 || shape[0] == 0 {
        return Err(Error::config(format!(
            "softmax expects a batched input, got shape {shape:?}"
        )));
    }
    let item = input.item_len();
    let mut out = input.clone();
    for row in out.data_mut().chunks_mut(item) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

/// Concatenates along the channel axis; inputs must agree on batch and
/// spatial extents.
pub fn concat_channels(inputs: &[&Tensor]) -> Result<Tensor> {
    if inputs.len() < 2 {
        return Err(Error::config("concat needs at least two inputs"));
    }
    let (n, first) = batch_of(inputs[0], 3, "concat")?;
    let (h, w) = (first[1], first[2]);
    let mut channels = 0;
    for t in inputs {
        let (tn, item) = batch_of(t, 3, "concat")?;
        if tn != n || item[1] != h || item[2] != w {
            return Err(Error::config(format!(
                "concat inputs must share batch and spatial extents; got {:?} vs {:?}",
                inputs[0].shape(),
                t.shape()
            )));
        }
        channels += item[0];
    }
    let mut out = vec![0.0f64; n * channels * h * w];
    let plane = h * w;
    for ni in 0..n {
        let mut dst = ni * channels * plane;
        for t in inputs {
            let tc = t.shape()[1];
            let slab = tc * plane;
            let src = &t.data()[ni * slab..(ni + 1) * slab];
            out[dst..dst + slab].copy_from_slice(src);
            dst += slab;
        }
    }
    Tensor::from_vec(vec![n, channels, h, w], out)
}

fn eval_stage(
    model: &NetworkModel,
    store: &WeightStore,
    stage: usize,
    inputs: &[&Tensor],
) -> Result<Tensor> {
    let kind = &model.stages()[stage].kind;
    let out = match kind {
        StageKind::Conv(p) => forward_conv2d(
            inputs[0],
            store.require(&p.weights)?,
            store.require(&p.bias)?,
            p.stride,
            p.pad,
        )?,
        StageKind::FullyConnected(p) => {
            forward_fully_connected(inputs[0], store.require(&p.weights)?, store.require(&p.bias)?)?
        }
        StageKind::Relu => relu(inputs[0]),
        StageKind::MaxPool(p) => max_pool_2d(inputs[0], p.window, p.stride, p.pad)?,
        StageKind::AvgPool(p) => avg_pool_2d(inputs[0], p.window, p.stride, p.pad)?,
        StageKind::Lrn(p) => lrn_across_channels(inputs[0], p)?,
        StageKind::Dropout => inputs[0].clone(),
        StageKind::Softmax => forward_softmax(inputs[0])?,
        StageKind::Concat => concat_channels(inputs)?,
    };
    if out.shape()[1..] != *model.stage_shape(stage) {
        return Err(Error::config(format!(
            "stage {:?} produced item shape {:?}, model expects {:?}; weight extents likely disagree with the model",
            model.stages()[stage].name,
            &out.shape()[1..],
            model.stage_shape(stage)
        )));
    }
    Ok(out)
}

/// Runs the network, passing each group's exit tensor through `boundary`
/// before downstream stages (and the caller) see it. The network output is
/// the last group's exit, so it too passes through the hook.
pub(crate) fn run_network<F>(
    model: &NetworkModel,
    store: &WeightStore,
    input: &Tensor,
    mut boundary: F,
) -> Result<Tensor>
where
    F: FnMut(usize, Tensor) -> Result<Tensor>,
{
    let shape = input.shape();
    if shape.len() != model.input_shape().len() + 1
        || shape[1..] != *model.input_shape()
        || shape[0] == 0
    {
        return Err(Error::config(format!(
            "input batch shape {:?} does not match model input {:?}",
            shape,
            model.input_shape()
        )));
    }
    let mut outputs: Vec<Option<Tensor>> = vec![None; model.stages().len()];
    for i in 0..model.stages().len() {
        let gathered: Vec<&Tensor> = model
            .stage_inputs(i)
            .iter()
            .map(|r| match r {
                InputRef::Network => input,
                InputRef::Stage(j) => outputs[*j].as_ref().expect("topological order"),
            })
            .collect();
        let mut out = eval_stage(model, store, i, &gathered)?;
        if model.is_group_exit(i) {
            out = boundary(model.group_of_stage(i), out)?;
        }
        outputs[i] = Some(out);
    }
    Ok(outputs[model.output_stage()].take().expect("network output"))
}

/// Full-precision forward pass over a batched input.
pub fn forward_network(model: &NetworkModel, store: &WeightStore, input: &Tensor) -> Result<Tensor> {
    run_network(model, store, input, |_, t| Ok(t))
}
