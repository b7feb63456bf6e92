//! Building blocks with hand-written forward and backward passes.
//!
//! Everything is `f64` and single-threaded. Convolutions go through
//! im2col so the inner loop is a GEMM; backward passes accumulate into
//! per-layer gradient buffers that the optimizer consumes.

use ndarray::{Array1, Array2, Array3, Array4, Axis};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// Standard deviation used for weight initialisation (DCGAN convention).
pub const INIT_STD: f64 = 0.02;

/// Visits (name, parameter, gradient) slice pairs in a fixed order.
pub type ParamVisitor<'a> = dyn FnMut(&str, &mut [f64], &mut [f64]) + 'a;

/// Visits (name, shape, values) for every persistent array, gradients
/// excluded. Used for checkpoints and weight export.
pub type StateVisitor<'a> = dyn FnMut(&str, &[usize], &mut Vec<f64>) + 'a;

pub(crate) fn normal_array1(rng: &mut ChaCha20Rng, len: usize, std: f64) -> Array1<f64> {
    Array1::from_iter((0..len).map(|_| rng.sample::<f64, _>(StandardNormal) * std))
}

pub(crate) fn normal_array2(rng: &mut ChaCha20Rng, dim: (usize, usize), std: f64) -> Array2<f64> {
    let data = (0..dim.0 * dim.1)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * std)
        .collect();
    Array2::from_shape_vec(dim, data).expect("shape matches data length")
}

fn normal_array4(
    rng: &mut ChaCha20Rng,
    dim: (usize, usize, usize, usize),
    std: f64,
) -> Array4<f64> {
    let data = (0..dim.0 * dim.1 * dim.2 * dim.3)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * std)
        .collect();
    Array4::from_shape_vec(dim, data).expect("shape matches data length")
}

fn visit_state_array<const D: usize>(
    f: &mut StateVisitor<'_>,
    name: &str,
    arr: &mut ndarray::Array<f64, ndarray::Dim<[usize; D]>>,
) where
    ndarray::Dim<[usize; D]>: ndarray::Dimension,
{
    let shape: Vec<usize> = arr.shape().to_vec();
    let mut data = arr.as_slice().expect("standard layout").to_vec();
    f(name, &shape, &mut data);
    let updated = ndarray::Array::from_shape_vec(arr.raw_dim(), data).expect("length preserved");
    *arr = updated;
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

/// Fully connected layer, `y = x W^T + b`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Array2<f64>, // (out, in)
    pub b: Array1<f64>,
    pub dw: Array2<f64>,
    pub db: Array1<f64>,
    name: String,
}

impl Dense {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, rng: &mut ChaCha20Rng) -> Self {
        Dense {
            w: normal_array2(rng, (out_dim, in_dim), INIT_STD),
            b: Array1::zeros(out_dim),
            dw: Array2::zeros((out_dim, in_dim)),
            db: Array1::zeros(out_dim),
            name: name.to_string(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Array2<f64>, gout: &Array2<f64>) -> Array2<f64> {
        self.dw += &gout.t().dot(x);
        self.db += &gout.sum_axis(Axis(0));
        gout.dot(&self.w)
    }

    pub fn zero_grads(&mut self) {
        self.dw.fill(0.0);
        self.db.fill(0.0);
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor<'_>) {
        f(
            &format!("{}.w", self.name),
            self.w.as_slice_mut().expect("standard layout"),
            self.dw.as_slice_mut().expect("standard layout"),
        );
        f(
            &format!("{}.b", self.name),
            self.b.as_slice_mut().expect("standard layout"),
            self.db.as_slice_mut().expect("standard layout"),
        );
    }

    pub fn visit_state(&mut self, f: &mut StateVisitor<'_>) {
        let name = self.name.clone();
        visit_state_array(f, &format!("{name}.w"), &mut self.w);
        visit_state_array(f, &format!("{name}.b"), &mut self.b);
    }
}

// ---------------------------------------------------------------------------
// Convolution plumbing
// ---------------------------------------------------------------------------

pub fn conv_out_dim(input: usize, k: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - k) / stride + 1
}

/// Lowers image patches to a (c·kh·kw, oh·ow) matrix per batch element.
fn im2col(x: &Array4<f64>, kh: usize, kw: usize, stride: usize, pad: usize) -> Array3<f64> {
    let (n, c, h, w) = x.dim();
    let oh = conv_out_dim(h, kh, stride, pad);
    let ow = conv_out_dim(w, kw, stride, pad);
    let mut cols = Array3::zeros((n, c * kh * kw, oh * ow));
    for b in 0..n {
        for ch in 0..c {
            for ki in 0..kh {
                for kj in 0..kw {
                    let row = (ch * kh + ki) * kw + kj;
                    for oy in 0..oh {
                        let iy = (oy * stride + ki) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * stride + kj) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            cols[(b, row, oy * ow + ox)] = x[(b, ch, iy as usize, ix as usize)];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-adds columns back into image space; exact transpose of [`im2col`].
fn col2im(
    cols: &Array3<f64>,
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Array4<f64> {
    let n = cols.dim().0;
    let oh = conv_out_dim(h, kh, stride, pad);
    let ow = conv_out_dim(w, kw, stride, pad);
    let mut x = Array4::zeros((n, c, h, w));
    for b in 0..n {
        for ch in 0..c {
            for ki in 0..kh {
                for kj in 0..kw {
                    let row = (ch * kh + ki) * kw + kj;
                    for oy in 0..oh {
                        let iy = (oy * stride + ki) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * stride + kj) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            x[(b, ch, iy as usize, ix as usize)] += cols[(b, row, oy * ow + ox)];
                        }
                    }
                }
            }
        }
    }
    x
}

/// `y[b] = W2 · cols[b] (+ bias)` where `W2` is the kernel flattened to
/// (co, ci·kh·kw).
fn conv_apply(
    w: &Array4<f64>,
    b: Option<&Array1<f64>>,
    cols: &Array3<f64>,
    oh: usize,
    ow: usize,
) -> Array4<f64> {
    let (co, ci, kh, kw) = w.dim();
    let n = cols.dim().0;
    let w2 = w
        .view()
        .into_shape_with_order((co, ci * kh * kw))
        .expect("kernel is standard layout");
    let mut y = Array4::zeros((n, co, oh, ow));
    for bi in 0..n {
        let prod = w2.dot(&cols.index_axis(Axis(0), bi)); // (co, oh*ow)
        let mut out = y.index_axis_mut(Axis(0), bi);
        out.assign(
            &prod
                .into_shape_with_order((co, oh, ow))
                .expect("shape agrees"),
        );
        if let Some(bias) = b {
            for c in 0..co {
                let mut plane = out.index_axis_mut(Axis(0), c);
                plane += bias[c];
            }
        }
    }
    y
}

/// Forward convolution with kernel layout (co, ci, kh, kw).
pub fn conv_forward(
    x: &Array4<f64>,
    w: &Array4<f64>,
    b: Option<&Array1<f64>>,
    stride: usize,
    pad: usize,
) -> Array4<f64> {
    let (_, _, kh, kw) = w.dim();
    let (_, _, h, wid) = x.dim();
    let cols = im2col(x, kh, kw, stride, pad);
    conv_apply(w, b, &cols, conv_out_dim(h, kh, stride, pad), conv_out_dim(wid, kw, stride, pad))
}

/// Gradient of a convolution with respect to its input.
pub fn conv_backward_input(
    gout: &Array4<f64>,
    w: &Array4<f64>,
    input_h: usize,
    input_w: usize,
    stride: usize,
    pad: usize,
) -> Array4<f64> {
    let (co, ci, kh, kw) = w.dim();
    let (n, _, oh, ow) = gout.dim();
    let w2 = w
        .view()
        .into_shape_with_order((co, ci * kh * kw))
        .expect("kernel is standard layout");
    let mut dcols = Array3::zeros((n, ci * kh * kw, oh * ow));
    for bi in 0..n {
        let g = gout.index_axis(Axis(0), bi);
        let g2 = g
            .into_shape_with_order((co, oh * ow))
            .expect("gradient is standard layout");
        dcols.index_axis_mut(Axis(0), bi).assign(&w2.t().dot(&g2));
    }
    col2im(&dcols, ci, input_h, input_w, kh, kw, stride, pad)
}

/// Gradient of a convolution with respect to its kernel (and bias).
pub fn conv_backward_weight(
    x: &Array4<f64>,
    gout: &Array4<f64>,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> (Array4<f64>, Array1<f64>) {
    let (n, ci, _, _) = x.dim();
    let (_, co, oh, ow) = gout.dim();
    let cols = im2col(x, kh, kw, stride, pad);
    let mut dw2 = Array2::zeros((co, ci * kh * kw));
    let mut db = Array1::zeros(co);
    for bi in 0..n {
        let g = gout.index_axis(Axis(0), bi);
        let g2 = g
            .into_shape_with_order((co, oh * ow))
            .expect("gradient is standard layout");
        dw2 += &g2.dot(&cols.index_axis(Axis(0), bi).t());
        db += &g2.sum_axis(Axis(1));
    }
    let dw = dw2
        .into_shape_with_order((co, ci, kh, kw))
        .expect("shape agrees");
    (dw, db)
}

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

/// Strided convolution, kernel layout (out, in, kh, kw).
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: Array4<f64>,
    pub b: Array1<f64>,
    pub dw: Array4<f64>,
    pub db: Array1<f64>,
    pub stride: usize,
    pub pad: usize,
    name: String,
}

impl Conv2d {
    pub fn new(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha20Rng,
    ) -> Self {
        Conv2d {
            w: normal_array4(rng, (out_ch, in_ch, k, k), INIT_STD),
            b: Array1::zeros(out_ch),
            dw: Array4::zeros((out_ch, in_ch, k, k)),
            db: Array1::zeros(out_ch),
            stride,
            pad,
            name: name.to_string(),
        }
    }

    pub fn forward(&self, x: &Array4<f64>) -> Array4<f64> {
        conv_forward(x, &self.w, Some(&self.b), self.stride, self.pad)
    }

    pub fn backward(&mut self, x: &Array4<f64>, gout: &Array4<f64>) -> Array4<f64> {
        let (_, _, kh, kw) = self.w.dim();
        let (dw, db) = conv_backward_weight(x, gout, kh, kw, self.stride, self.pad);
        self.dw += &dw;
        self.db += &db;
        let (_, _, h, w) = x.dim();
        conv_backward_input(gout, &self.w, h, w, self.stride, self.pad)
    }

    pub fn zero_grads(&mut self) {
        self.dw.fill(0.0);
        self.db.fill(0.0);
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor<'_>) {
        f(
            &format!("{}.w", self.name),
            self.w.as_slice_mut().expect("standard layout"),
            self.dw.as_slice_mut().expect("standard layout"),
        );
        f(
            &format!("{}.b", self.name),
            self.b.as_slice_mut().expect("standard layout"),
            self.db.as_slice_mut().expect("standard layout"),
        );
    }

    pub fn visit_state(&mut self, f: &mut StateVisitor<'_>) {
        let name = self.name.clone();
        visit_state_array(f, &format!("{name}.w"), &mut self.w);
        visit_state_array(f, &format!("{name}.b"), &mut self.b);
    }
}

// ---------------------------------------------------------------------------
// ConvTranspose2d
// ---------------------------------------------------------------------------

/// Transposed (fractionally strided) convolution, kernel layout
/// (in, out, kh, kw). Forward is the adjoint of [`Conv2d`] with the same
/// kernel, so for k=4, stride=2, pad=1 it exactly doubles spatial size.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub w: Array4<f64>,
    pub b: Array1<f64>,
    pub dw: Array4<f64>,
    pub db: Array1<f64>,
    pub stride: usize,
    pub pad: usize,
    name: String,
}

impl ConvTranspose2d {
    pub fn new(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha20Rng,
    ) -> Self {
        ConvTranspose2d {
            w: normal_array4(rng, (in_ch, out_ch, k, k), INIT_STD),
            b: Array1::zeros(out_ch),
            dw: Array4::zeros((in_ch, out_ch, k, k)),
            db: Array1::zeros(out_ch),
            stride,
            pad,
            name: name.to_string(),
        }
    }

    pub fn output_dim(&self, input: usize) -> usize {
        let (_, _, kh, _) = self.w.dim();
        (input - 1) * self.stride + kh - 2 * self.pad
    }

    pub fn forward(&self, x: &Array4<f64>) -> Array4<f64> {
        let (n, _, h, w) = x.dim();
        let (_, co, _, _) = self.w.dim();
        let (out_h, out_w) = (self.output_dim(h), self.output_dim(w));
        // The kernel read as (co_conv, ci_conv, kh, kw) defines the conv
        // this layer is the adjoint of; x plays the output-gradient role.
        let mut y = conv_backward_input(x, &self.w, out_h, out_w, self.stride, self.pad);
        for bi in 0..n {
            for c in 0..co {
                let mut plane = y
                    .index_axis_mut(Axis(0), bi)
                    .index_axis_move(Axis(0), c);
                plane += self.b[c];
            }
        }
        y
    }

    pub fn backward(&mut self, x: &Array4<f64>, gout: &Array4<f64>) -> Array4<f64> {
        let (_, _, kh, kw) = self.w.dim();
        // Roles swap relative to Conv2d: the adjoint's weight gradient
        // correlates the downstream gradient with this layer's input.
        let (dw, _) = conv_backward_weight(gout, x, kh, kw, self.stride, self.pad);
        self.dw += &dw;
        self.db += &gout.sum_axis(Axis(0)).sum_axis(Axis(1)).sum_axis(Axis(1));
        conv_forward(gout, &self.w, None, self.stride, self.pad)
    }

    pub fn zero_grads(&mut self) {
        self.dw.fill(0.0);
        self.db.fill(0.0);
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor<'_>) {
        f(
            &format!("{}.w", self.name),
            self.w.as_slice_mut().expect("standard layout"),
            self.dw.as_slice_mut().expect("standard layout"),
        );
        f(
            &format!("{}.b", self.name),
            self.b.as_slice_mut().expect("standard layout"),
            self.db.as_slice_mut().expect("standard layout"),
        );
    }

    pub fn visit_state(&mut self, f: &mut StateVisitor<'_>) {
        let name = self.name.clone();
        visit_state_array(f, &format!("{name}.w"), &mut self.w);
        visit_state_array(f, &format!("{name}.b"), &mut self.b);
    }
}

// ---------------------------------------------------------------------------
// Batch normalisation
// ---------------------------------------------------------------------------

/// Normalisation mode: batch statistics during training, running averages
/// at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-channel batch normalisation for dense (n, c) and image
/// (n, c, h, w) activations.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub dgamma: Array1<f64>,
    pub dbeta: Array1<f64>,
    pub eps: f64,
    pub momentum: f64,
    name: String,
}

/// Cached quantities from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    // Flattened to (samples, channels) regardless of input rank.
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl BatchNorm {
    pub fn new(name: &str, channels: usize) -> Self {
        BatchNorm {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            dgamma: Array1::zeros(channels),
            dbeta: Array1::zeros(channels),
            eps: 1e-5,
            momentum: 0.1,
            name: name.to_string(),
        }
    }

    /// Core pass over a (samples, channels) view. Training mode updates the
    /// running statistics.
    fn forward_flat(&mut self, x: &Array2<f64>, mode: Mode) -> (Array2<f64>, Option<BnCache>) {
        let (m, c) = x.dim();
        match mode {
            Mode::Train => {
                let mean = x.mean_axis(Axis(0)).expect("nonempty batch");
                let mut var = Array1::zeros(c);
                for j in 0..c {
                    let col = x.index_axis(Axis(1), j);
                    var[j] = col.iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / m as f64;
                }
                let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
                let mut xhat = x.clone();
                for j in 0..c {
                    let mut col = xhat.index_axis_mut(Axis(1), j);
                    col.mapv_inplace(|v| (v - mean[j]) * inv_std[j]);
                }
                let mut y = xhat.clone();
                for j in 0..c {
                    let mut col = y.index_axis_mut(Axis(1), j);
                    col.mapv_inplace(|v| v * self.gamma[j] + self.beta[j]);
                }
                // Running variance stores the unbiased estimate.
                let unbias = if m > 1 { m as f64 / (m - 1) as f64 } else { 1.0 };
                for j in 0..c {
                    self.running_mean[j] =
                        (1.0 - self.momentum) * self.running_mean[j] + self.momentum * mean[j];
                    self.running_var[j] = (1.0 - self.momentum) * self.running_var[j]
                        + self.momentum * var[j] * unbias;
                }
                (y, Some(BnCache { xhat, inv_std }))
            }
            Mode::Eval => (self.eval_flat(x), None),
        }
    }

    fn eval_flat(&self, x: &Array2<f64>) -> Array2<f64> {
        let c = x.ncols();
        let mut y = x.clone();
        for j in 0..c {
            let inv = 1.0 / (self.running_var[j] + self.eps).sqrt();
            let mut col = y.index_axis_mut(Axis(1), j);
            col.mapv_inplace(|v| (v - self.running_mean[j]) * inv * self.gamma[j] + self.beta[j]);
        }
        y
    }

    fn backward_flat(&mut self, cache: &BnCache, gout: &Array2<f64>) -> Array2<f64> {
        let (m, c) = gout.dim();
        let mf = m as f64;
        let mut dx = Array2::zeros((m, c));
        for j in 0..c {
            let xhat = cache.xhat.index_axis(Axis(1), j);
            let g = gout.index_axis(Axis(1), j);
            let sum_g: f64 = g.sum();
            let sum_gx: f64 = g.iter().zip(xhat.iter()).map(|(a, b)| a * b).sum();
            self.dgamma[j] += sum_gx;
            self.dbeta[j] += sum_g;
            let scale = self.gamma[j] * cache.inv_std[j] / mf;
            for i in 0..m {
                dx[(i, j)] = scale * (mf * g[i] - sum_g - xhat[i] * sum_gx);
            }
        }
        dx
    }

    pub fn forward2(&mut self, x: &Array2<f64>, mode: Mode) -> (Array2<f64>, Option<BnCache>) {
        self.forward_flat(x, mode)
    }

    /// Inference pass from running statistics; does not mutate.
    pub fn eval2(&self, x: &Array2<f64>) -> Array2<f64> {
        self.eval_flat(x)
    }

    /// Inference pass from running statistics; does not mutate.
    pub fn eval4(&self, x: &Array4<f64>) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let flat = to_channel_cols(x);
        from_channel_cols(&self.eval_flat(&flat), n, c, h, w)
    }

    pub fn backward2(&mut self, cache: &BnCache, gout: &Array2<f64>) -> Array2<f64> {
        self.backward_flat(cache, gout)
    }

    pub fn forward4(&mut self, x: &Array4<f64>, mode: Mode) -> (Array4<f64>, Option<BnCache>) {
        let (n, c, h, w) = x.dim();
        let flat = to_channel_cols(x);
        let (y, cache) = self.forward_flat(&flat, mode);
        (from_channel_cols(&y, n, c, h, w), cache)
    }

    pub fn backward4(&mut self, cache: &BnCache, gout: &Array4<f64>) -> Array4<f64> {
        let (n, c, h, w) = gout.dim();
        let flat = to_channel_cols(gout);
        let dx = self.backward_flat(cache, &flat);
        from_channel_cols(&dx, n, c, h, w)
    }

    pub fn zero_grads(&mut self) {
        self.dgamma.fill(0.0);
        self.dbeta.fill(0.0);
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor<'_>) {
        f(
            &format!("{}.gamma", self.name),
            self.gamma.as_slice_mut().expect("standard layout"),
            self.dgamma.as_slice_mut().expect("standard layout"),
        );
        f(
            &format!("{}.beta", self.name),
            self.beta.as_slice_mut().expect("standard layout"),
            self.dbeta.as_slice_mut().expect("standard layout"),
        );
    }

    pub fn visit_state(&mut self, f: &mut StateVisitor<'_>) {
        let name = self.name.clone();
        visit_state_array(f, &format!("{name}.gamma"), &mut self.gamma);
        visit_state_array(f, &format!("{name}.beta"), &mut self.beta);
        visit_state_array(f, &format!("{name}.running_mean"), &mut self.running_mean);
        visit_state_array(f, &format!("{name}.running_var"), &mut self.running_var);
    }
}

/// (n, c, h, w) -> (n·h·w, c) with sample order (b, y, x).
fn to_channel_cols(x: &Array4<f64>) -> Array2<f64> {
    let (n, c, h, w) = x.dim();
    let mut out = Array2::zeros((n * h * w, c));
    for b in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    out[((b * h + y) * w + xx, ch)] = x[(b, ch, y, xx)];
                }
            }
        }
    }
    out
}

fn from_channel_cols(flat: &Array2<f64>, n: usize, c: usize, h: usize, w: usize) -> Array4<f64> {
    let mut out = Array4::zeros((n, c, h, w));
    for b in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    out[(b, ch, y, xx)] = flat[((b * h + y) * w + xx, ch)];
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

pub fn relu<D: ndarray::Dimension>(x: &ndarray::Array<f64, D>) -> ndarray::Array<f64, D> {
    x.mapv(|v| v.max(0.0))
}

/// Backward uses the forward output: y > 0 iff x > 0.
pub fn relu_backward<D: ndarray::Dimension>(
    y: &ndarray::Array<f64, D>,
    gout: &ndarray::Array<f64, D>,
) -> ndarray::Array<f64, D> {
    let mut dx = gout.clone();
    ndarray::Zip::from(&mut dx).and(y).for_each(|d, &yv| {
        if yv <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}

pub fn leaky_relu<D: ndarray::Dimension>(
    x: &ndarray::Array<f64, D>,
    slope: f64,
) -> ndarray::Array<f64, D> {
    x.mapv(|v| if v >= 0.0 { v } else { slope * v })
}

pub fn leaky_relu_backward<D: ndarray::Dimension>(
    y: &ndarray::Array<f64, D>,
    gout: &ndarray::Array<f64, D>,
    slope: f64,
) -> ndarray::Array<f64, D> {
    let mut dx = gout.clone();
    ndarray::Zip::from(&mut dx).and(y).for_each(|d, &yv| {
        if yv < 0.0 {
            *d *= slope;
        }
    });
    dx
}

pub fn tanh<D: ndarray::Dimension>(x: &ndarray::Array<f64, D>) -> ndarray::Array<f64, D> {
    x.mapv(f64::tanh)
}

pub fn tanh_backward<D: ndarray::Dimension>(
    y: &ndarray::Array<f64, D>,
    gout: &ndarray::Array<f64, D>,
) -> ndarray::Array<f64, D> {
    let mut dx = gout.clone();
    ndarray::Zip::from(&mut dx).and(y).for_each(|d, &yv| {
        *d *= 1.0 - yv * yv;
    });
    dx
}

pub fn sigmoid<D: ndarray::Dimension>(x: &ndarray::Array<f64, D>) -> ndarray::Array<f64, D> {
    x.mapv(|v| 1.0 / (1.0 + (-v).exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_chacha::rand_core::SeedableRng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(1234)
    }

    fn random4(rng: &mut ChaCha20Rng, dim: (usize, usize, usize, usize)) -> Array4<f64> {
        normal_array4(rng, dim, 1.0)
    }

    #[test]
    fn conv_shapes_halve_with_k4_s2_p1() {
        let mut r = rng();
        let conv = Conv2d::new("c", 3, 5, 4, 2, 1, &mut r);
        let x = random4(&mut r, (2, 3, 28, 28));
        assert_eq!(conv.forward(&x).dim(), (2, 5, 14, 14));
        let x = random4(&mut r, (2, 3, 4, 4));
        assert_eq!(conv.forward(&x).dim(), (2, 5, 2, 2));
    }

    #[test]
    fn deconv_shapes_double_with_k4_s2_p1() {
        let mut r = rng();
        let dc = ConvTranspose2d::new("d", 3, 5, 4, 2, 1, &mut r);
        let x = random4(&mut r, (2, 3, 7, 7));
        assert_eq!(dc.forward(&x).dim(), (2, 5, 14, 14));
        let x = random4(&mut r, (2, 3, 1, 1));
        assert_eq!(dc.forward(&x).dim(), (2, 5, 2, 2));
    }

    #[test]
    fn conv_matches_direct_summation() {
        let mut r = rng();
        let conv = Conv2d::new("c", 2, 3, 3, 2, 1, &mut r);
        let x = random4(&mut r, (1, 2, 5, 5));
        let y = conv.forward(&x);
        let (_, _, oh, ow) = y.dim();
        for co in 0..3 {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = conv.b[co];
                    for ci in 0..2 {
                        for ki in 0..3 {
                            for kj in 0..3 {
                                let iy = (oy * 2 + ki) as isize - 1;
                                let ix = (ox * 2 + kj) as isize - 1;
                                if iy >= 0 && iy < 5 && ix >= 0 && ix < 5 {
                                    acc += conv.w[(co, ci, ki, kj)]
                                        * x[(0, ci, iy as usize, ix as usize)];
                                }
                            }
                        }
                    }
                    assert_abs_diff_eq!(y[(0, co, oy, ox)], acc, epsilon = 1e-12);
                }
            }
        }
    }

    /// Transposed conv must be the exact adjoint of conv with the same
    /// kernel: <conv(x), y> == <x, deconv(y)> for all x, y.
    #[test]
    fn deconv_is_conv_adjoint() {
        let mut r = rng();
        let mut dc = ConvTranspose2d::new("d", 4, 3, 4, 2, 1, &mut r);
        dc.b.fill(0.0);
        // Conv kernel with identical values: (co=4, ci=3, 4, 4) maps 3ch->4ch.
        let x = random4(&mut r, (2, 3, 8, 8));
        let y = random4(&mut r, (2, 4, 4, 4));
        let cx = conv_forward(&x, &dc.w, None, 2, 1); // (2, 4, 4, 4)
        let dy = dc.forward(&y); // (2, 3, 8, 8)
        let lhs: f64 = (&cx * &y).sum();
        let rhs: f64 = (&x * &dy).sum();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-9);
    }

    /// Finite-difference check for every layer's backward pass.
    #[test]
    fn layer_gradients_match_finite_differences() {
        let mut r = rng();
        let eps = 1e-6;

        // Dense
        let mut dense = Dense::new("fc", 4, 3, &mut r);
        let x = normal_array2(&mut r, (5, 4), 1.0);
        let loss = |d: &Dense, x: &Array2<f64>| -> f64 { d.forward(x).mapv(|v| v * v).sum() };
        let y = dense.forward(&x);
        let gout = y.mapv(|v| 2.0 * v);
        let gin = dense.backward(&x, &gout);
        for idx in [(0usize, 0usize), (2, 3), (1, 1)] {
            let mut dp = dense.clone();
            dp.w[idx] += eps;
            let mut dm = dense.clone();
            dm.w[idx] -= eps;
            let fd = (loss(&dp, &x) - loss(&dm, &x)) / (2.0 * eps);
            assert_abs_diff_eq!(dense.dw[idx], fd, epsilon = 1e-5);
        }
        {
            let mut xp = x.clone();
            xp[(1, 2)] += eps;
            let mut xm = x.clone();
            xm[(1, 2)] -= eps;
            let fd = (loss(&dense, &xp) - loss(&dense, &xm)) / (2.0 * eps);
            assert_abs_diff_eq!(gin[(1, 2)], fd, epsilon = 1e-5);
        }

        // Conv2d
        let mut conv = Conv2d::new("cv", 2, 3, 4, 2, 1, &mut r);
        let x = random4(&mut r, (2, 2, 8, 8));
        let closs =
            |c: &Conv2d, x: &Array4<f64>| -> f64 { c.forward(x).mapv(|v| v * v).sum() };
        let y = conv.forward(&x);
        let gout = y.mapv(|v| 2.0 * v);
        let gin = conv.backward(&x, &gout);
        for idx in [(0usize, 0usize, 0usize, 0usize), (2, 1, 3, 2)] {
            let mut cp = conv.clone();
            cp.w[idx] += eps;
            let mut cm = conv.clone();
            cm.w[idx] -= eps;
            let fd = (closs(&cp, &x) - closs(&cm, &x)) / (2.0 * eps);
            assert_abs_diff_eq!(conv.dw[idx], fd, epsilon = 1e-4);
        }
        {
            let mut xp = x.clone();
            xp[(1, 1, 3, 5)] += eps;
            let mut xm = x.clone();
            xm[(1, 1, 3, 5)] -= eps;
            let fd = (closs(&conv, &xp) - closs(&conv, &xm)) / (2.0 * eps);
            assert_abs_diff_eq!(gin[(1, 1, 3, 5)], fd, epsilon = 1e-4);
        }

        // ConvTranspose2d
        let mut dc = ConvTranspose2d::new("dc", 3, 2, 4, 2, 1, &mut r);
        let x = random4(&mut r, (2, 3, 4, 4));
        let tloss =
            |d: &ConvTranspose2d, x: &Array4<f64>| -> f64 { d.forward(x).mapv(|v| v * v).sum() };
        let y = dc.forward(&x);
        let gout = y.mapv(|v| 2.0 * v);
        let gin = dc.backward(&x, &gout);
        for idx in [(0usize, 0usize, 1usize, 2usize), (2, 1, 0, 3)] {
            let mut dp = dc.clone();
            dp.w[idx] += eps;
            let mut dm = dc.clone();
            dm.w[idx] -= eps;
            let fd = (tloss(&dp, &x) - tloss(&dm, &x)) / (2.0 * eps);
            assert_abs_diff_eq!(dc.dw[idx], fd, epsilon = 1e-4);
        }
        {
            let mut bp = dc.clone();
            bp.b[1] += eps;
            let mut bm = dc.clone();
            bm.b[1] -= eps;
            let fd = (tloss(&bp, &x) - tloss(&bm, &x)) / (2.0 * eps);
            assert_abs_diff_eq!(dc.db[1], fd, epsilon = 1e-4);
        }
        {
            let mut xp = x.clone();
            xp[(0, 2, 1, 1)] += eps;
            let mut xm = x.clone();
            xm[(0, 2, 1, 1)] -= eps;
            let fd = (tloss(&dc, &xp) - tloss(&dc, &xm)) / (2.0 * eps);
            assert_abs_diff_eq!(gin[(0, 2, 1, 1)], fd, epsilon = 1e-4);
        }
    }

    #[test]
    fn batchnorm_train_normalises_and_backward_matches_fd() {
        let mut r = rng();
        let mut bn = BatchNorm::new("bn", 3);
        bn.gamma = Array1::from_vec(vec![1.5, 0.7, 1.0]);
        bn.beta = Array1::from_vec(vec![0.1, -0.2, 0.0]);
        let x = normal_array2(&mut r, (16, 3), 2.0);

        let (y, cache) = bn.forward2(&x, Mode::Train);
        // Each channel of xhat has mean ~0 and variance ~1.
        for j in 0..3 {
            let col: Vec<f64> = (0..16).map(|i| (y[(i, j)] - bn.beta[j]) / bn.gamma[j]).collect();
            let mean: f64 = col.iter().sum::<f64>() / 16.0;
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-10);
        }

        let cache = cache.unwrap();
        let gout = y.mapv(|v| 2.0 * v);
        let gin = bn.backward2(&cache, &gout);

        let eps = 1e-6;
        let loss = |bn: &mut BatchNorm, x: &Array2<f64>| -> f64 {
            let (y, _) = bn.forward_flat(x, Mode::Train);
            y.mapv(|v| v * v).sum()
        };
        {
            let mut xp = x.clone();
            xp[(3, 1)] += eps;
            let mut xm = x.clone();
            xm[(3, 1)] -= eps;
            let fd = (loss(&mut bn.clone(), &xp) - loss(&mut bn.clone(), &xm)) / (2.0 * eps);
            assert_abs_diff_eq!(gin[(3, 1)], fd, epsilon = 1e-5);
        }
        {
            let mut bp = bn.clone();
            bp.gamma[2] += eps;
            let mut bm = bn.clone();
            bm.gamma[2] -= eps;
            let fd = (loss(&mut bp, &x) - loss(&mut bm, &x)) / (2.0 * eps);
            assert_abs_diff_eq!(bn.dgamma[2], fd, epsilon = 1e-5);
        }
        {
            let mut bp = bn.clone();
            bp.beta[0] += eps;
            let mut bm = bn.clone();
            bm.beta[0] -= eps;
            let fd = (loss(&mut bp, &x) - loss(&mut bm, &x)) / (2.0 * eps);
            assert_abs_diff_eq!(bn.dbeta[0], fd, epsilon = 1e-5);
        }
    }

    #[test]
    fn batchnorm_4d_matches_flat_semantics() {
        let mut r = rng();
        let mut bn = BatchNorm::new("bn", 2);
        let x = random4(&mut r, (3, 2, 4, 4));
        let (y, _) = bn.forward4(&x, Mode::Train);
        // Channel stats over (n, h, w) should be normalised.
        for ch in 0..2 {
            let vals: Vec<f64> = (0..3)
                .flat_map(|b| {
                    (0..4).flat_map(move |i| (0..4).map(move |j| (b, i, j)))
                })
                .map(|(b, i, j)| y[(b, ch, i, j)])
                .collect();
            let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
            let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / vals.len() as f64;
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(var, 1.0, epsilon = 1e-3);
        }
    }
}
