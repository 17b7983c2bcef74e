use rand::Rng;

use super::Tensor;
use crate::{Error, Result};

/// Gradients of one layer: parameter gradients plus the gradient with respect
/// to the layer input (absent when the caller did not ask for it).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub weights: Tensor,
    pub bias: Tensor,
    pub input: Option<Tensor>,
}

/// `c = alpha * a · b + beta * c` over strided row/column views.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        assert!((m - 1) * rsa + (k - 1) * csa < a.len(), "gemm: lhs view out of bounds");
        assert!((k - 1) * rsb + (n - 1) * csb < b.len(), "gemm: rhs view out of bounds");
    }
    assert!((m - 1) * rsc + (n - 1) * csc < c.len(), "gemm: output view out of bounds");
    // SAFETY: the asserts above keep every strided access inside the slices, and
    // `c` is borrowed mutably so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

struct ConvDims {
    time: usize,
    channels: usize,
    filters: usize,
    width: usize,
    out_time: usize,
}

fn conv_dims(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<ConvDims> {
    const OP: &str = "conv1d";
    if input.rank() != 2 {
        return Err(Error::dim(OP, "input rank", 2, input.rank()));
    }
    if kernels.rank() != 3 {
        return Err(Error::dim(OP, "kernel rank", 3, kernels.rank()));
    }
    let (time, channels) = (input.dim(0), input.dim(1));
    let (filters, width, kc) = (kernels.dim(0), kernels.dim(1), kernels.dim(2));
    if kc != channels {
        return Err(Error::dim(OP, "channels", channels, kc));
    }
    if bias.shape() != [filters] {
        return Err(Error::dim(OP, "bias", filters, bias.len()));
    }
    if time < width {
        return Err(Error::dim(OP, "time", width, time));
    }
    Ok(ConvDims {
        time,
        channels,
        filters,
        width,
        out_time: time - width + 1,
    })
}

/// Valid (unpadded) stride-1 temporal convolution.
///
/// `input` is `time × channels`, `kernels` is `filters × width × channels`.
/// Output is `(time − width + 1) × filters`.
pub fn conv1d_forward(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let d = conv_dims(input, kernels, bias)?;
    let wc = d.width * d.channels;
    let mut out = Tensor::zeros(&[d.out_time, d.filters]);
    for row in out.data_mut().chunks_exact_mut(d.filters) {
        row.copy_from_slice(bias.data());
    }
    // Row t of the patch matrix is the contiguous slice input[t*C .. t*C + W*C].
    gemm(
        d.out_time,
        wc,
        d.filters,
        1.0,
        input.data(),
        (d.channels, 1),
        kernels.data(),
        (1, wc),
        1.0,
        out.data_mut(),
        (d.filters, 1),
    );
    Ok(out)
}

fn conv_backward_impl(
    input: &Tensor,
    kernels: &Tensor,
    upstream: &Tensor,
    want_input: bool,
) -> Result<LayerGradients> {
    let bias_shape = Tensor::zeros(&[kernels.dim(0).max(1)]);
    let d = conv_dims(input, kernels, &bias_shape)?;
    if upstream.shape() != [d.out_time, d.filters] {
        return Err(Error::dim(
            "conv1d_backward",
            "upstream",
            d.out_time * d.filters,
            upstream.len(),
        ));
    }
    let wc = d.width * d.channels;
    let g = upstream.data();

    let mut dk = Tensor::zeros(&[d.filters, d.width, d.channels]);
    gemm(
        d.filters,
        d.out_time,
        wc,
        1.0,
        g,
        (1, d.filters),
        input.data(),
        (d.channels, 1),
        0.0,
        dk.data_mut(),
        (wc, 1),
    );

    let mut db = Tensor::zeros(&[d.filters]);
    for row in g.chunks_exact(d.filters) {
        for (acc, v) in db.data_mut().iter_mut().zip(row) {
            *acc += v;
        }
    }

    let dx = if want_input {
        let mut dp = vec![0.0; d.out_time * wc];
        gemm(
            d.out_time,
            d.filters,
            wc,
            1.0,
            g,
            (d.filters, 1),
            kernels.data(),
            (wc, 1),
            0.0,
            &mut dp,
            (wc, 1),
        );
        let mut dx = Tensor::zeros(&[d.time, d.channels]);
        let dxd = dx.data_mut();
        for (t, prow) in dp.chunks_exact(wc).enumerate() {
            let base = t * d.channels;
            for (acc, v) in dxd[base..base + wc].iter_mut().zip(prow) {
                *acc += v;
            }
        }
        Some(dx)
    } else {
        None
    };

    Ok(LayerGradients {
        weights: dk,
        bias: db,
        input: dx,
    })
}

/// Gradients of [`conv1d_forward`] with respect to kernels, bias and input.
pub fn conv1d_backward(input: &Tensor, kernels: &Tensor, upstream: &Tensor) -> Result<LayerGradients> {
    conv_backward_impl(input, kernels, upstream, true)
}

/// Like [`conv1d_backward`] but skips the input gradient (first layer, or the
/// lowest trainable layer above a frozen stack).
pub fn conv1d_backward_params(
    input: &Tensor,
    kernels: &Tensor,
    upstream: &Tensor,
) -> Result<LayerGradients> {
    conv_backward_impl(input, kernels, upstream, false)
}

fn dense_dims(input: &Tensor, weights: &Tensor) -> Result<(usize, usize)> {
    const OP: &str = "dense";
    if weights.rank() != 2 {
        return Err(Error::dim(OP, "weight rank", 2, weights.rank()));
    }
    if input.rank() != 1 {
        return Err(Error::dim(OP, "input rank", 1, input.rank()));
    }
    let (m, n) = (weights.dim(0), weights.dim(1));
    if input.len() != n {
        return Err(Error::dim(OP, "input", n, input.len()));
    }
    Ok((m, n))
}

/// `weights · input + bias` with `weights` stored `out × in`.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (m, n) = dense_dims(input, weights)?;
    if bias.shape() != [m] {
        return Err(Error::dim("dense", "bias", m, bias.len()));
    }
    let x = input.data();
    let out = weights
        .data()
        .chunks_exact(n)
        .zip(bias.data())
        .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect();
    Tensor::new(vec![m], out)
}

pub fn dense_backward(input: &Tensor, weights: &Tensor, upstream: &Tensor) -> Result<LayerGradients> {
    let (m, n) = dense_dims(input, weights)?;
    if upstream.shape() != [m] {
        return Err(Error::dim("dense_backward", "upstream", m, upstream.len()));
    }
    let x = input.data();
    let g = upstream.data();
    let mut dw = Tensor::zeros(&[m, n]);
    let mut dx = vec![0.0; n];
    for ((row_grad, row_w), &gi) in dw
        .data_mut()
        .chunks_exact_mut(n)
        .zip(weights.data().chunks_exact(n))
        .zip(g)
    {
        if gi == 0.0 {
            continue;
        }
        for ((dwij, &xj), (dxj, &wij)) in row_grad.iter_mut().zip(x).zip(dx.iter_mut().zip(row_w)) {
            *dwij = gi * xj;
            *dxj += gi * wij;
        }
    }
    Ok(LayerGradients {
        weights: dw,
        bias: upstream.clone(),
        input: Some(Tensor::new(vec![n], dx)?),
    })
}

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Passes `upstream` where the pre-activation was strictly positive.
pub fn relu_backward(pre_activation: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    if pre_activation.shape() != upstream.shape() {
        return Err(Error::dim("relu_backward", "shape", pre_activation.len(), upstream.len()));
    }
    let mut out = upstream.clone();
    for (g, &z) in out.data_mut().iter_mut().zip(pre_activation.data()) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(out)
}

fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = sigmoid_scalar(*v));
    out
}

/// Backward of [`sigmoid`] given its output `s`: `upstream · s(1 − s)`.
pub fn sigmoid_backward(output: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    if output.shape() != upstream.shape() {
        return Err(Error::dim("sigmoid_backward", "shape", output.len(), upstream.len()));
    }
    let mut out = upstream.clone();
    for (g, &s) in out.data_mut().iter_mut().zip(output.data()) {
        *g *= s * (1.0 - s);
    }
    Ok(out)
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::dim("softmax", "input", 1, 0));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

/// Per-filter maximum over time. Ties resolve to the lowest time index.
pub fn global_max_pool(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    if input.rank() != 2 {
        return Err(Error::dim("global_max_pool", "input rank", 2, input.rank()));
    }
    let filters = input.dim(1);
    let mut best = input.data()[..filters].to_vec();
    let mut idx = vec![0usize; filters];
    for (t, row) in input.data().chunks_exact(filters).enumerate().skip(1) {
        for f in 0..filters {
            if row[f] > best[f] {
                best[f] = row[f];
                idx[f] = t;
            }
        }
    }
    Ok((Tensor::new(vec![filters], best)?, idx))
}

/// Routes each filter's upstream gradient to the time step that won the max.
pub fn global_max_pool_backward(indices: &[usize], upstream: &Tensor, time: usize) -> Result<Tensor> {
    let filters = indices.len();
    if upstream.len() != filters {
        return Err(Error::dim("global_max_pool_backward", "upstream", filters, upstream.len()));
    }
    let mut out = Tensor::zeros(&[time, filters]);
    let d = out.data_mut();
    for (f, (&t, &g)) in indices.iter().zip(upstream.data()).enumerate() {
        if t >= time {
            return Err(Error::dim("global_max_pool_backward", "index", time, t));
        }
        d[t * filters + f] = g;
    }
    Ok(out)
}

/// Per-element scale factors applied by a training-mode [`dropout`] call
/// (0 for dropped, `1/(1−rate)` for kept). Empty in evaluation mode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DropoutMask(Option<Vec<f64>>);

impl DropoutMask {
    pub fn identity() -> Self {
        Self(None)
    }

    pub fn backward(&self, upstream: &Tensor) -> Tensor {
        let mut out = upstream.clone();
        if let Some(mask) = &self.0 {
            out.data_mut().iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
        }
        out
    }

    pub fn zeroed_fraction(&self) -> f64 {
        match &self.0 {
            None => 0.0,
            Some(m) => m.iter().filter(|&&v| v == 0.0).count() as f64 / m.len() as f64,
        }
    }
}

/// Inverted dropout: survivors are scaled by `1/(1−rate)` at training time so
/// evaluation mode is the identity.
pub fn dropout<R: Rng + ?Sized>(
    input: &Tensor,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Tensor, DropoutMask)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::config(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), DropoutMask::identity()));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..input.len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let mut out = input.clone();
    out.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
    Ok((out, DropoutMask(Some(mask))))
}
