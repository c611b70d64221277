//! Per-sample forward and backward kernels for each layer kind.

use rand::Rng as _;

use super::config::LayerSpec;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// What a layer remembers from its forward pass for the backward pass.
#[derive(Debug, Clone)]
pub(crate) enum Cache {
    None,
    /// Dropout multipliers (0 or 1/(1-p)).
    Mask(Vec<f64>),
    /// Flat input index that won each pooling window.
    Argmax(Vec<usize>),
    /// Per-element normaliser `k + alpha * sum a^2`.
    Norm(Vec<f64>),
}

/// Initial parameters: Glorot-uniform weights, zero biases.
pub(crate) fn init_params(spec: &LayerSpec, in_shape: &[usize], rng: &mut Rng) -> Vec<Tensor> {
    let (w_shape, fan_in, fan_out) = match *spec {
        LayerSpec::Dense { units } => {
            let n_in: usize = in_shape.iter().product();
            (vec![units, n_in], n_in, units)
        }
        LayerSpec::Conv2d { filters, size } => {
            let c = in_shape[0];
            (
                vec![filters, c, size, size],
                c * size * size,
                filters * size * size,
            )
        }
        _ => return Vec::new(),
    };
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = w_shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-a..=a)).collect();
    let bias = Tensor::zeros(&[w_shape[0]]);
    vec![
        Tensor::new(w_shape, data).expect("shape computed above"),
        bias,
    ]
}

pub(crate) fn forward(
    spec: &LayerSpec,
    params: &[Tensor],
    input: &Tensor,
    out_shape: &[usize],
    dropout: Option<&mut Rng>,
) -> (Tensor, Cache) {
    match *spec {
        LayerSpec::Dense { units } => {
            let (w, b) = (&params[0], &params[1]);
            let x = input.data();
            let n_in = x.len();
            let out: Vec<f64> = (0..units)
                .map(|o| {
                    let row = &w.data()[o * n_in..(o + 1) * n_in];
                    b.data()[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            (Tensor::vector(out), Cache::None)
        }
        LayerSpec::Conv2d { filters, size } => {
            let out = conv_forward(&params[0], &params[1], input, filters, size);
            (
                Tensor::new(out_shape.to_vec(), out).expect("conv shape"),
                Cache::None,
            )
        }
        LayerSpec::Relu => (input.map(|v| v.max(0.0)), Cache::None),
        LayerSpec::Maxpool2x2 => {
            let (out, idx) = pool_forward(input, out_shape);
            (
                Tensor::new(out_shape.to_vec(), out).expect("pool shape"),
                Cache::Argmax(idx),
            )
        }
        LayerSpec::ResponseNorm {
            k,
            alpha,
            beta,
            window,
        } => {
            let (c, hw) = channel_layout(input.shape());
            let a = input.data();
            let half = window / 2;
            let mut scale = vec![0.0; a.len()];
            let mut out = vec![0.0; a.len()];
            for ch in 0..c {
                let lo = ch.saturating_sub(half);
                let hi = (ch + window - half - 1).min(c - 1);
                for p in 0..hw {
                    let sum_sq: f64 = (lo..=hi).map(|j| a[j * hw + p] * a[j * hw + p]).sum();
                    let s = k + alpha * sum_sq;
                    scale[ch * hw + p] = s;
                    out[ch * hw + p] = a[ch * hw + p] * s.powf(-beta);
                }
            }
            (
                Tensor::new(input.shape().to_vec(), out).expect("norm shape"),
                Cache::Norm(scale),
            )
        }
        LayerSpec::Dropout { p } => match dropout {
            Some(rng) => {
                let keep = 1.0 / (1.0 - p);
                let mask: Vec<f64> = (0..input.len())
                    .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                    .collect();
                let out = input.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
                (
                    Tensor::new(input.shape().to_vec(), out).expect("dropout shape"),
                    Cache::Mask(mask),
                )
            }
            None => (input.clone(), Cache::None),
        },
        LayerSpec::Softmax => (input.clone(), Cache::None),
    }
}

/// Propagates `grad_out` back through one layer. Parameter gradients are
/// accumulated (added) into `param_grads` when given.
pub(crate) fn backward(
    spec: &LayerSpec,
    params: &[Tensor],
    input: &Tensor,
    cache: &Cache,
    grad_out: &Tensor,
    param_grads: Option<&mut [Tensor]>,
) -> Tensor {
    match *spec {
        LayerSpec::Dense { units } => {
            let w = &params[0];
            let x = input.data();
            let n_in = x.len();
            let g = grad_out.data();
            let mut gin = vec![0.0; n_in];
            for o in 0..units {
                let row = &w.data()[o * n_in..(o + 1) * n_in];
                for (gi, wi) in gin.iter_mut().zip(row) {
                    *gi += wi * g[o];
                }
            }
            if let Some(pg) = param_grads {
                let (gw, gb) = pg.split_at_mut(1);
                let gw = gw[0].data_mut();
                for o in 0..units {
                    if g[o] != 0.0 {
                        for (dst, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                            *dst += g[o] * xi;
                        }
                    }
                }
                for (dst, go) in gb[0].data_mut().iter_mut().zip(g) {
                    *dst += go;
                }
            }
            Tensor::new(input.shape().to_vec(), gin).expect("dense grad shape")
        }
        LayerSpec::Conv2d { filters, size } => {
            conv_backward(&params[0], input, grad_out, filters, size, param_grads)
        }
        LayerSpec::Relu => {
            let data = input
                .data()
                .iter()
                .zip(grad_out.data())
                .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                .collect();
            Tensor::new(input.shape().to_vec(), data).expect("relu grad shape")
        }
        LayerSpec::Maxpool2x2 => {
            let Cache::Argmax(idx) = cache else {
                unreachable!("pool cache")
            };
            let mut gin = vec![0.0; input.len()];
            for (&i, &g) in idx.iter().zip(grad_out.data()) {
                gin[i] += g;
            }
            Tensor::new(input.shape().to_vec(), gin).expect("pool grad shape")
        }
        LayerSpec::ResponseNorm {
            alpha,
            beta,
            window,
            ..
        } => {
            let Cache::Norm(scale) = cache else {
                unreachable!("norm cache")
            };
            let (c, hw) = channel_layout(input.shape());
            let a = input.data();
            let g = grad_out.data();
            let half = window / 2;
            // t_c = g_c * a_c * s_c^(-beta-1), summed over every window that covers d
            let t: Vec<f64> = (0..a.len())
                .map(|i| g[i] * a[i] * scale[i].powf(-beta - 1.0))
                .collect();
            let mut gin = vec![0.0; a.len()];
            for d in 0..c {
                // channel ch's window covers d iff ch - half <= d <= ch + (window - half - 1)
                let lo = d.saturating_sub(window - half - 1);
                let hi = (d + half).min(c - 1);
                for p in 0..hw {
                    let i = d * hw + p;
                    let cross: f64 = (lo..=hi).map(|ch| t[ch * hw + p]).sum();
                    gin[i] = g[i] * scale[i].powf(-beta) - 2.0 * alpha * beta * a[i] * cross;
                }
            }
            Tensor::new(input.shape().to_vec(), gin).expect("norm grad shape")
        }
        LayerSpec::Dropout { .. } => match cache {
            Cache::Mask(mask) => {
                let data = grad_out
                    .data()
                    .iter()
                    .zip(mask)
                    .map(|(g, m)| g * m)
                    .collect();
                Tensor::new(input.shape().to_vec(), data).expect("dropout grad shape")
            }
            _ => grad_out.clone(),
        },
        LayerSpec::Softmax => grad_out.clone(),
    }
}

/// (channels, spatial size) for `[c, h, w]`; a flat input is treated as
/// `len` channels of one pixel.
fn channel_layout(shape: &[usize]) -> (usize, usize) {
    match shape {
        [c, rest @ ..] if !rest.is_empty() => (*c, rest.iter().product()),
        [n] => (*n, 1),
        _ => (1, 1),
    }
}

fn conv_forward(w: &Tensor, b: &Tensor, input: &Tensor, filters: usize, size: usize) -> Vec<f64> {
    let [c, h, wd] = input.shape() else {
        unreachable!("conv input rank checked at build")
    };
    let (c, h, wd) = (*c, *h, *wd);
    let pad = size / 2;
    let x = input.data();
    let wt = w.data();
    let mut out = vec![0.0; filters * h * wd];
    for f in 0..filters {
        let plane = &mut out[f * h * wd..(f + 1) * h * wd];
        plane.iter_mut().for_each(|v| *v = b.data()[f]);
        for ch in 0..c {
            let src = &x[ch * h * wd..(ch + 1) * h * wd];
            for ky in 0..size {
                for kx in 0..size {
                    let wv = wt[((f * c + ch) * size + ky) * size + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    for y in 0..h {
                        let sy = y + ky;
                        if sy < pad || sy - pad >= h {
                            continue;
                        }
                        let sy = sy - pad;
                        for xx in 0..wd {
                            let sx = xx + kx;
                            if sx < pad || sx - pad >= wd {
                                continue;
                            }
                            plane[y * wd + xx] += wv * src[sy * wd + sx - pad];
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv_backward(
    w: &Tensor,
    input: &Tensor,
    grad_out: &Tensor,
    filters: usize,
    size: usize,
    param_grads: Option<&mut [Tensor]>,
) -> Tensor {
    let [c, h, wd] = input.shape() else {
        unreachable!("conv input rank checked at build")
    };
    let (c, h, wd) = (*c, *h, *wd);
    let pad = size / 2;
    let x = input.data();
    let g = grad_out.data();
    let wt = w.data();
    let mut gin = vec![0.0; x.len()];
    let mut pg = param_grads;
    for f in 0..filters {
        let gplane = &g[f * h * wd..(f + 1) * h * wd];
        if let Some(pg) = pg.as_deref_mut() {
            pg[1].data_mut()[f] += gplane.iter().sum::<f64>();
        }
        for ch in 0..c {
            let src = &x[ch * h * wd..(ch + 1) * h * wd];
            let dst = &mut gin[ch * h * wd..(ch + 1) * h * wd];
            for ky in 0..size {
                for kx in 0..size {
                    let wi = ((f * c + ch) * size + ky) * size + kx;
                    let wv = wt[wi];
                    let mut acc = 0.0;
                    for y in 0..h {
                        let sy = y + ky;
                        if sy < pad || sy - pad >= h {
                            continue;
                        }
                        let sy = sy - pad;
                        for xx in 0..wd {
                            let sx = xx + kx;
                            if sx < pad || sx - pad >= wd {
                                continue;
                            }
                            let go = gplane[y * wd + xx];
                            let si = sy * wd + sx - pad;
                            dst[si] += wv * go;
                            acc += src[si] * go;
                        }
                    }
                    if let Some(pg) = pg.as_deref_mut() {
                        pg[0].data_mut()[wi] += acc;
                    }
                }
            }
        }
    }
    Tensor::new(input.shape().to_vec(), gin).expect("conv grad shape")
}

fn pool_forward(input: &Tensor, out_shape: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let [c, h, w] = input.shape() else {
        unreachable!("pool input rank checked at build")
    };
    let (c, h, w) = (*c, *h, *w);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut idx = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let mut best = ch * h * w + (2 * y) * w + 2 * xx;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = ch * h * w + (2 * y + dy) * w + 2 * xx + dx;
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                out.push(x[best]);
                idx.push(best);
            }
        }
    }
    (out, idx)
}
