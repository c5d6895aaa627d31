//! Dense row-major tensors and the forward/backward numeric kernels
//! (convolution, pooling, upsampling, dense product, activations) that the
//! rest of the crate builds on.
//!
//! Rank-4 feature maps use the (batch, channels, height, width) convention.
//! All values are f64; finite-difference gradient checking needs the
//! precision and nothing here is large enough to care about the memory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense N-dimensional array of f64 values in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from a shape and flat row-major data.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::InvalidArgument("tensor rank must be >= 1".into()));
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} implies {n} elements, data has {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Single-element tensor of shape `[1]`.
    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "expected scalar, got shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    /// Same data under a new shape with identical element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Tensor::from_vec(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise a + b.
    pub fn add(&self, other: &Tensor) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "add: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    /// In-place self += scale * other.
    pub fn add_scaled(&mut self, other: &Tensor, scale: f64) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "add_scaled: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    fn dims4(&self, what: &str) -> Result<(usize, usize, usize, usize)> {
        if self.rank() != 4 {
            return Err(Error::ShapeMismatch(format!(
                "{what}: expected rank-4 tensor, got shape {:?}",
                self.shape
            )));
        }
        Ok((self.shape[0], self.shape[1], self.shape[2], self.shape[3]))
    }
}

/// Elementwise nonlinearity applied after a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's own output. For relu the
    /// subgradient at exactly zero output is taken as 0.
    pub fn deriv_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Applies an elementwise activation to any tensor.
pub fn activate(input: &Tensor, kind: Activation) -> Tensor {
    input.map(|v| kind.apply(v))
}

/// Backward of `activate`: upstream grad times the pointwise derivative.
pub fn activate_backward(output: &Tensor, grad_out: &Tensor, kind: Activation) -> Tensor {
    let data = output
        .data
        .iter()
        .zip(&grad_out.data)
        .map(|(&y, &g)| g * kind.deriv_from_output(y))
        .collect();
    Tensor {
        shape: output.shape.clone(),
        data,
    }
}

/// Output spatial extent of a convolution along one axis, or an error when
/// the kernel overhangs the padded input.
fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = input + 2 * pad;
    if padded < kernel {
        return Err(Error::ShapeMismatch(format!(
            "non-positive convolution output: input {input} + 2*pad {pad} < kernel {kernel}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Range of output positions whose input index `o*stride + k - pad` stays in
/// `[0, limit)`.
fn valid_out_range(
    limit: usize,
    out_dim: usize,
    stride: usize,
    pad: usize,
    k: usize,
) -> (usize, usize) {
    let lo = if pad > k {
        (pad - k + stride - 1) / stride
    } else {
        0
    };
    let hi = if limit + pad > k {
        ((limit + pad - k - 1) / stride + 1).min(out_dim)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// 2-D cross-correlation of a (B, Cin, H, W) input with a (Cout, Cin, KH, KW)
/// kernel plus a per-channel bias.
pub fn conv2d(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let (b, cin, h, w) = input.dims4("conv2d input")?;
    let (cout, kcin, kh, kw) = kernel.dims4("conv2d kernel")?;
    if cin != kcin {
        return Err(Error::ShapeMismatch(format!(
            "conv2d: input has {cin} channels, kernel expects {kcin}"
        )));
    }
    if bias.shape() != [cout] {
        return Err(Error::ShapeMismatch(format!(
            "conv2d: bias shape {:?}, expected [{cout}]",
            bias.shape()
        )));
    }
    if stride == 0 {
        return Err(Error::InvalidArgument("conv2d: stride must be >= 1".into()));
    }
    let oh = conv_out_dim(h, kh, stride, pad)?;
    let ow = conv_out_dim(w, kw, stride, pad)?;

    let mut out = vec![0.0; b * cout * oh * ow];
    let ind = &input.data;
    let kd = &kernel.data;
    for bi in 0..b {
        for oc in 0..cout {
            let out_base = (bi * cout + oc) * oh * ow;
            let beta = bias.data[oc];
            out[out_base..out_base + oh * ow]
                .iter_mut()
                .for_each(|v| *v = beta);
            for ic in 0..cin {
                let in_base = (bi * cin + ic) * h * w;
                let k_base = (oc * cin + ic) * kh * kw;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = kd[k_base + ky * kw + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let (ylo, yhi) = valid_out_range(h, oh, stride, pad, ky);
                        let (xlo, xhi) = valid_out_range(w, ow, stride, pad, kx);
                        for oy in ylo..yhi {
                            let iy = oy * stride + ky - pad;
                            let orow = out_base + oy * ow;
                            let irow = in_base + iy * w;
                            if stride == 1 {
                                let src = &ind[irow + xlo + kx - pad..irow + xhi + kx - pad];
                                let dst = &mut out[orow + xlo..orow + xhi];
                                for (o, &iv) in dst.iter_mut().zip(src) {
                                    *o += wv * iv;
                                }
                            } else {
                                for ox in xlo..xhi {
                                    let ix = ox * stride + kx - pad;
                                    out[orow + ox] += wv * ind[irow + ix];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[b, cout, oh, ow], out)
}

/// Gradients of `conv2d` with respect to its input, kernel, and bias.
/// Each piece is computed only when requested.
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    pad: usize,
    need_input: bool,
    need_kernel: bool,
    need_bias: bool,
) -> Result<(Option<Tensor>, Option<Tensor>, Option<Tensor>)> {
    let (b, cin, h, w) = input.dims4("conv2d input")?;
    let (cout, _, kh, kw) = kernel.dims4("conv2d kernel")?;
    let (gb, gc, oh, ow) = grad_out.dims4("conv2d grad")?;
    if gb != b || gc != cout {
        return Err(Error::ShapeMismatch(format!(
            "conv2d backward: grad shape {:?} does not match output",
            grad_out.shape()
        )));
    }

    let gd = &grad_out.data;
    let ind = &input.data;
    let kd = &kernel.data;

    let mut d_input = need_input.then(|| vec![0.0; input.len()]);
    let mut d_kernel = need_kernel.then(|| vec![0.0; kernel.len()]);
    let mut d_bias = need_bias.then(|| vec![0.0; cout]);

    if let Some(db) = d_bias.as_mut() {
        for bi in 0..b {
            for oc in 0..cout {
                let base = (bi * cout + oc) * oh * ow;
                db[oc] += gd[base..base + oh * ow].iter().sum::<f64>();
            }
        }
    }

    for bi in 0..b {
        for oc in 0..cout {
            let out_base = (bi * cout + oc) * oh * ow;
            for ic in 0..cin {
                let in_base = (bi * cin + ic) * h * w;
                let k_base = (oc * cin + ic) * kh * kw;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let (ylo, yhi) = valid_out_range(h, oh, stride, pad, ky);
                        let (xlo, xhi) = valid_out_range(w, ow, stride, pad, kx);
                        if xlo >= xhi {
                            continue;
                        }
                        if let Some(dk) = d_kernel.as_mut() {
                            let mut acc = 0.0;
                            for oy in ylo..yhi {
                                let iy = oy * stride + ky - pad;
                                let orow = out_base + oy * ow;
                                let irow = in_base + iy * w;
                                if stride == 1 {
                                    let src = &ind[irow + xlo + kx - pad..irow + xhi + kx - pad];
                                    let g = &gd[orow + xlo..orow + xhi];
                                    acc += g.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                                } else {
                                    for ox in xlo..xhi {
                                        let ix = ox * stride + kx - pad;
                                        acc += gd[orow + ox] * ind[irow + ix];
                                    }
                                }
                            }
                            dk[k_base + ky * kw + kx] += acc;
                        }
                        if let Some(di) = d_input.as_mut() {
                            let wv = kd[k_base + ky * kw + kx];
                            if wv == 0.0 {
                                continue;
                            }
                            for oy in ylo..yhi {
                                let iy = oy * stride + ky - pad;
                                let orow = out_base + oy * ow;
                                let irow = in_base + iy * w;
                                if stride == 1 {
                                    let dst = &mut di[irow + xlo + kx - pad..irow + xhi + kx - pad];
                                    let g = &gd[orow + xlo..orow + xhi];
                                    for (d, &gv) in dst.iter_mut().zip(g) {
                                        *d += wv * gv;
                                    }
                                } else {
                                    for ox in xlo..xhi {
                                        let ix = ox * stride + kx - pad;
                                        di[irow + ix] += wv * gd[orow + ox];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    Ok((
        d_input.map(|d| Tensor {
            shape: input.shape.clone(),
            data: d,
        }),
        d_kernel.map(|d| Tensor {
            shape: kernel.shape.clone(),
            data: d,
        }),
        d_bias.map(|d| Tensor {
            shape: vec![cout],
            data: d,
        }),
    ))
}

/// 2x2 max pooling with stride 2. Returns the pooled map and, per output
/// element, the flat index of the winning input element (first maximum in
/// row-major order on ties).
pub fn maxpool2(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (b, c, h, w) = input.dims4("maxpool2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "maxpool2: spatial dims must be even, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; b * c * oh * ow];
    let mut argmax = vec![0usize; out.len()];
    let ind = &input.data;
    for bc in 0..b * c {
        let in_base = bc * h * w;
        let out_base = bc * oh * ow;
        for oy in 0..oh {
            for ox in 0..ow {
                let i00 = in_base + (2 * oy) * w + 2 * ox;
                let mut best = ind[i00];
                let mut best_i = i00;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = in_base + (2 * oy + dy) * w + 2 * ox + dx;
                    if ind[idx] > best {
                        best = ind[idx];
                        best_i = idx;
                    }
                }
                out[out_base + oy * ow + ox] = best;
                argmax[out_base + oy * ow + ox] = best_i;
            }
        }
    }
    Ok((Tensor::from_vec(&[b, c, oh, ow], out)?, argmax))
}

/// Backward of `maxpool2`: the gradient of each pooled cell goes entirely to
/// the stored argmax location.
pub fn maxpool2_backward(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Tensor {
    let mut d = vec![0.0; input_shape.iter().product()];
    for (g, &idx) in grad_out.data.iter().zip(argmax) {
        d[idx] += g;
    }
    Tensor {
        shape: input_shape.to_vec(),
        data: d,
    }
}

/// Nearest-neighbor x2 upsampling: every input pixel becomes a 2x2 block.
pub fn upsample2(input: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = input.dims4("upsample2")?;
    let (oh, ow) = (h * 2, w * 2);
    let mut out = vec![0.0; b * c * oh * ow];
    let ind = &input.data;
    for bc in 0..b * c {
        let in_base = bc * h * w;
        let out_base = bc * oh * ow;
        for y in 0..h {
            for x in 0..w {
                let v = ind[in_base + y * w + x];
                let o = out_base + (2 * y) * ow + 2 * x;
                out[o] = v;
                out[o + 1] = v;
                out[o + ow] = v;
                out[o + ow + 1] = v;
            }
        }
    }
    Tensor::from_vec(&[b, c, oh, ow], out)
}

/// Backward of `upsample2`: each input pixel collects the gradient of its
/// 2x2 output block.
pub fn upsample2_backward(input_shape: &[usize], grad_out: &Tensor) -> Tensor {
    let (b, c, h, w) = (
        input_shape[0],
        input_shape[1],
        input_shape[2],
        input_shape[3],
    );
    let ow = w * 2;
    let mut d = vec![0.0; b * c * h * w];
    let gd = &grad_out.data;
    for bc in 0..b * c {
        let in_base = bc * h * w;
        let out_base = bc * (h * 2) * ow;
        for y in 0..h {
            for x in 0..w {
                let o = out_base + (2 * y) * ow + 2 * x;
                d[in_base + y * w + x] = gd[o] + gd[o + 1] + gd[o + ow] + gd[o + ow + 1];
            }
        }
    }
    Tensor {
        shape: input_shape.to_vec(),
        data: d,
    }
}

/// Average pooling over factor x factor blocks.
pub fn avgpool2(input: &Tensor, factor: usize) -> Result<Tensor> {
    let (b, c, h, w) = input.dims4("avgpool2")?;
    if factor == 0 {
        return Err(Error::InvalidArgument(
            "avgpool2: factor must be >= 1".into(),
        ));
    }
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::ShapeMismatch(format!(
            "avgpool2: dims {h}x{w} not divisible by factor {factor}"
        )));
    }
    if factor == 1 {
        return Ok(input.clone());
    }
    let (oh, ow) = (h / factor, w / factor);
    let inv = 1.0 / (factor * factor) as f64;
    let mut out = vec![0.0; b * c * oh * ow];
    let ind = &input.data;
    for bc in 0..b * c {
        let in_base = bc * h * w;
        let out_base = bc * oh * ow;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for dy in 0..factor {
                    let row = in_base + (oy * factor + dy) * w + ox * factor;
                    acc += ind[row..row + factor].iter().sum::<f64>();
                }
                out[out_base + oy * ow + ox] = acc * inv;
            }
        }
    }
    Tensor::from_vec(&[b, c, oh, ow], out)
}

/// Backward of `avgpool2`: gradient is spread uniformly over each block.
pub fn avgpool2_backward(input_shape: &[usize], factor: usize, grad_out: &Tensor) -> Tensor {
    if factor == 1 {
        return grad_out.clone();
    }
    let (b, c, h, w) = (
        input_shape[0],
        input_shape[1],
        input_shape[2],
        input_shape[3],
    );
    let (oh, ow) = (h / factor, w / factor);
    let inv = 1.0 / (factor * factor) as f64;
    let mut d = vec![0.0; b * c * h * w];
    let gd = &grad_out.data;
    for bc in 0..b * c {
        let in_base = bc * h * w;
        let out_base = bc * oh * ow;
        for oy in 0..oh {
            for ox in 0..ow {
                let g = gd[out_base + oy * ow + ox] * inv;
                for dy in 0..factor {
                    let row = in_base + (oy * factor + dy) * w + ox * factor;
                    d[row..row + factor].iter_mut().for_each(|v| *v += g);
                }
            }
        }
    }
    Tensor {
        shape: input_shape.to_vec(),
        data: d,
    }
}

/// Affine map `input * weight^T + bias` over a (B, N) batch with weight
/// (M, N) and bias (M).
pub fn dense(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if input.rank() != 2 || weight.rank() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "dense: expected rank-2 input and weight, got {:?} and {:?}",
            input.shape(),
            weight.shape()
        )));
    }
    let (b, n) = (input.shape[0], input.shape[1]);
    let (m, wn) = (weight.shape[0], weight.shape[1]);
    if n != wn {
        return Err(Error::ShapeMismatch(format!(
            "dense: input features {n} vs weight input dimension {wn}"
        )));
    }
    if bias.shape() != [m] {
        return Err(Error::ShapeMismatch(format!(
            "dense: bias shape {:?}, expected [{m}]",
            bias.shape()
        )));
    }
    let mut out = vec![0.0; b * m];
    for bi in 0..b {
        let in_row = &input.data[bi * n..(bi + 1) * n];
        for mi in 0..m {
            let w_row = &weight.data[mi * n..(mi + 1) * n];
            let dot: f64 = in_row.iter().zip(w_row).map(|(a, b)| a * b).sum();
            out[bi * m + mi] = dot + bias.data[mi];
        }
    }
    Tensor::from_vec(&[b, m], out)
}

/// Gradients of `dense` with respect to input, weight, and bias.
pub fn dense_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    need_input: bool,
    need_weight: bool,
    need_bias: bool,
) -> Result<(Option<Tensor>, Option<Tensor>, Option<Tensor>)> {
    let (b, n) = (input.shape[0], input.shape[1]);
    let m = weight.shape[0];
    if grad_out.shape() != [b, m] {
        return Err(Error::ShapeMismatch(format!(
            "dense backward: grad shape {:?}, expected [{b}, {m}]",
            grad_out.shape()
        )));
    }
    let gd = &grad_out.data;
    let mut d_input = need_input.then(|| vec![0.0; input.len()]);
    let mut d_weight = need_weight.then(|| vec![0.0; weight.len()]);
    let mut d_bias = need_bias.then(|| vec![0.0; m]);
    for bi in 0..b {
        let g_row = &gd[bi * m..(bi + 1) * m];
        if let Some(di) = d_input.as_mut() {
            let d_row = &mut di[bi * n..(bi + 1) * n];
            for mi in 0..m {
                let g = g_row[mi];
                if g == 0.0 {
                    continue;
                }
                let w_row = &weight.data[mi * n..(mi + 1) * n];
                for (d, &wv) in d_row.iter_mut().zip(w_row) {
                    *d += g * wv;
                }
            }
        }
        if let Some(dw) = d_weight.as_mut() {
            let in_row = &input.data[bi * n..(bi + 1) * n];
            for mi in 0..m {
                let g = g_row[mi];
                if g == 0.0 {
                    continue;
                }
                let w_row = &mut dw[mi * n..(mi + 1) * n];
                for (d, &iv) in w_row.iter_mut().zip(in_row) {
                    *d += g * iv;
                }
            }
        }
        if let Some(db) = d_bias.as_mut() {
            for (d, &g) in db.iter_mut().zip(g_row) {
                *d += g;
            }
        }
    }
    Ok((
        d_input.map(|d| Tensor {
            shape: input.shape.clone(),
            data: d,
        }),
        d_weight.map(|d| Tensor {
            shape: weight.shape.clone(),
            data: d,
        }),
        d_bias.map(|d| Tensor {
            shape: vec![m],
            data: d,
        }),
    ))
}

/// Concatenates two rank-4 tensors along the channel axis.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ba, ca, ha, wa) = a.dims4("concat lhs")?;
    let (bb, cb, hb, wb) = b.dims4("concat rhs")?;
    if ba != bb || ha != hb || wa != wb {
        return Err(Error::ShapeMismatch(format!(
            "concat_channels: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let plane = ha * wa;
    let mut out = Vec::with_capacity((ca + cb) * ba * plane);
    for bi in 0..ba {
        out.extend_from_slice(&a.data[bi * ca * plane..(bi + 1) * ca * plane]);
        out.extend_from_slice(&b.data[bi * cb * plane..(bi + 1) * cb * plane]);
    }
    Tensor::from_vec(&[ba, ca + cb, ha, wa], out)
}

/// Splits a channel-concatenated gradient back into the two parts.
pub fn concat_channels_backward(grad_out: &Tensor, ca: usize, cb: usize) -> (Tensor, Tensor) {
    let b = grad_out.shape[0];
    let (h, w) = (grad_out.shape[2], grad_out.shape[3]);
    let plane = h * w;
    let mut da = Vec::with_capacity(b * ca * plane);
    let mut db = Vec::with_capacity(b * cb * plane);
    for bi in 0..b {
        let base = bi * (ca + cb) * plane;
        da.extend_from_slice(&grad_out.data[base..base + ca * plane]);
        db.extend_from_slice(&grad_out.data[base + ca * plane..base + (ca + cb) * plane]);
    }
    (
        Tensor {
            shape: vec![b, ca, h, w],
            data: da,
        },
        Tensor {
            shape: vec![b, cb, h, w],
            data: db,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t4(b: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Tensor {
        Tensor::from_vec(&[b, c, h, w], data).unwrap()
    }

    #[test]
    fn conv2d_zero_input_is_zero() {
        let input = Tensor::zeros(&[1, 1, 3, 3]);
        let kernel = Tensor::from_vec(&[1, 1, 3, 3], vec![0.3; 9]).unwrap();
        let bias = Tensor::zeros(&[1]);
        let out = conv2d(&input, &kernel, &bias, 1, 1).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv2d_ones_kernel_counts_overlap() {
        // Hand-computed sliding-window oracle: constant-1 input with an
        // all-ones 3x3 kernel counts the overlap size at each position.
        let input = Tensor::filled(&[1, 1, 3, 3], 1.0);
        let kernel = Tensor::filled(&[1, 1, 3, 3], 1.0);
        let bias = Tensor::zeros(&[1]);
        let out = conv2d(&input, &kernel, &bias, 1, 1).unwrap();
        assert_eq!(out.shape(), &[1, 1, 3, 3]);
        let expect = [4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0];
        for (a, e) in out.data().iter().zip(expect) {
            assert_eq!(*a, e);
        }
    }

    #[test]
    fn conv2d_1x1_kernel_scales() {
        let input = t4(1, 1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let kernel = Tensor::from_vec(&[1, 1, 1, 1], vec![2.0]).unwrap();
        let bias = Tensor::zeros(&[1]);
        let out = conv2d(&input, &kernel, &bias, 1, 0).unwrap();
        assert_eq!(out.data(), &[2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn conv2d_channel_mismatch_errors() {
        let input = Tensor::zeros(&[1, 2, 4, 4]);
        let kernel = Tensor::zeros(&[1, 3, 3, 3]);
        let bias = Tensor::zeros(&[1]);
        assert!(conv2d(&input, &kernel, &bias, 1, 1).is_err());
    }

    #[test]
    fn conv2d_too_small_input_errors() {
        let input = Tensor::zeros(&[1, 1, 2, 2]);
        let kernel = Tensor::zeros(&[1, 1, 5, 5]);
        let bias = Tensor::zeros(&[1]);
        assert!(conv2d(&input, &kernel, &bias, 1, 0).is_err());
    }

    #[test]
    fn conv2d_stride_two() {
        // 4x4 ramp, 2x2 ones kernel, stride 2: block sums.
        let input = t4(1, 1, 4, 4, (1..=16).map(f64::from).collect());
        let kernel = Tensor::filled(&[1, 1, 2, 2], 1.0);
        let bias = Tensor::zeros(&[1]);
        let out = conv2d(&input, &kernel, &bias, 2, 0).unwrap();
        assert_eq!(out.shape(), &[1, 1, 2, 2]);
        assert_eq!(out.data(), &[14.0, 22.0, 46.0, 54.0]);
    }

    #[test]
    fn maxpool2_picks_max_and_argmax() {
        let input = t4(1, 1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let (out, argmax) = maxpool2(&input).unwrap();
        assert_eq!(out.data(), &[4.0]);
        assert_eq!(argmax, vec![3]);
    }

    #[test]
    fn maxpool2_sixteen_grid() {
        // Exhaustive window max oracle for the row-major 1..16 grid.
        let input = t4(1, 1, 4, 4, (1..=16).map(f64::from).collect());
        let (out, _) = maxpool2(&input).unwrap();
        assert_eq!(out.data(), &[6.0, 8.0, 14.0, 16.0]);
    }

    #[test]
    fn maxpool2_constant_map() {
        let input = Tensor::filled(&[1, 1, 4, 4], 0.7);
        let (out, argmax) = maxpool2(&input).unwrap();
        assert_eq!(out.shape(), &[1, 1, 2, 2]);
        assert!(out.data().iter().all(|&v| v == 0.7));
        // Ties break to the first (row-major) element of each window.
        assert_eq!(argmax, vec![0, 2, 8, 10]);
    }

    #[test]
    fn maxpool2_odd_dims_error() {
        let input = Tensor::zeros(&[1, 1, 3, 4]);
        assert!(maxpool2(&input).is_err());
    }

    #[test]
    fn upsample2_doubles_blocks() {
        let input = t4(1, 1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let out = upsample2(&input).unwrap();
        assert_eq!(out.shape(), &[1, 1, 4, 4]);
        assert_eq!(
            out.data(),
            &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0]
        );
    }

    #[test]
    fn maxpool_of_upsample_is_identity() {
        let data: Vec<f64> = (0..24).map(|i| (i * 7 % 13) as f64 * 0.25 - 1.0).collect();
        let input = t4(2, 3, 2, 2, data);
        let up = upsample2(&input).unwrap();
        let (down, _) = maxpool2(&up).unwrap();
        assert_eq!(down, input);
    }

    #[test]
    fn dense_identity_and_zero_weight() {
        let input = Tensor::from_vec(&[1, 2], vec![5.0, -3.0]).unwrap();
        let eye = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let zero_b = Tensor::zeros(&[2]);
        let out = dense(&input, &eye, &zero_b).unwrap();
        assert_eq!(out.data(), input.data());

        let zero_w = Tensor::zeros(&[2, 2]);
        let bias = Tensor::from_vec(&[2], vec![0.5, -0.5]).unwrap();
        let out = dense(&input, &zero_w, &bias).unwrap();
        assert_eq!(out.data(), &[0.5, -0.5]);
    }

    #[test]
    fn dense_hand_product() {
        let input = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        let weight = Tensor::from_vec(&[2, 2], vec![1.0, 1.0, 0.0, 1.0]).unwrap();
        let bias = Tensor::zeros(&[2]);
        let out = dense(&input, &weight, &bias).unwrap();
        assert_eq!(out.data(), &[3.0, 2.0]);
    }

    #[test]
    fn dense_inner_dim_mismatch_errors() {
        let input = Tensor::zeros(&[1, 3]);
        let weight = Tensor::zeros(&[2, 4]);
        let bias = Tensor::zeros(&[2]);
        assert!(dense(&input, &weight, &bias).is_err());
    }

    #[test]
    fn activations_fixed_points() {
        assert_eq!(Activation::Relu.apply(-1.0), 0.0);
        assert_eq!(Activation::Relu.apply(2.0), 2.0);
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);
        let t = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        let out = activate(&t, Activation::Relu);
        assert_eq!(out.data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn sigmoid_output_strictly_inside_unit_interval() {
        // Saturation to exactly 0.0/1.0 only happens past |x| ~ 37 in f64;
        // the loss clamp guards that regime.
        let t = Tensor::from_vec(&[4], vec![-30.0, -10.0, 10.0, 30.0]).unwrap();
        let out = activate(&t, Activation::Sigmoid);
        assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn avgpool2_block_means() {
        let input = t4(1, 1, 2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let out = avgpool2(&input, 2).unwrap();
        assert_eq!(out.data(), &[0.5]);
        let id = avgpool2(&input, 1).unwrap();
        assert_eq!(id, input);
        assert!(avgpool2(&input, 3).is_err());
    }

    #[test]
    fn concat_channels_roundtrip() {
        let a = t4(2, 2, 2, 2, (0..16).map(f64::from).collect());
        let b = t4(2, 1, 2, 2, (100..108).map(f64::from).collect());
        let cat = concat_channels(&a, &b).unwrap();
        assert_eq!(cat.shape(), &[2, 3, 2, 2]);
        let (da, db) = concat_channels_backward(&cat, 2, 1);
        assert_eq!(da, a);
        assert_eq!(db, b);
    }

    #[test]
    fn conv2d_is_linear() {
        // conv(a*x + b*y) == a*conv(x) + b*conv(y) with zero bias.
        let mk = |seed: u64| {
            let mut s = seed;
            let mut next = move || {
                s = s
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                ((s >> 33) as f64 / (1u64 << 31) as f64) - 1.0
            };
            let x: Vec<f64> = (0..2 * 3 * 4 * 4).map(|_| next()).collect();
            t4(2, 3, 4, 4, x)
        };
        let x = mk(7);
        let y = mk(1234);
        let kernel = {
            let mut s = 99u64;
            let data: Vec<f64> = (0..2 * 3 * 3 * 3)
                .map(|_| {
                    s = s
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    ((s >> 33) as f64 / (1u64 << 31) as f64) - 1.0
                })
                .collect();
            Tensor::from_vec(&[2, 3, 3, 3], data).unwrap()
        };
        let bias = Tensor::zeros(&[2]);
        let (a, b) = (0.7, -1.3);
        let mut combo = x.scale(a);
        combo.add_scaled(&y, b).unwrap();
        let lhs = conv2d(&combo, &kernel, &bias, 1, 1).unwrap();
        let mut rhs = conv2d(&x, &kernel, &bias, 1, 1).unwrap().scale(a);
        rhs.add_scaled(&conv2d(&y, &kernel, &bias, 1, 1).unwrap(), b)
            .unwrap();
        for (l, r) in lhs.data().iter().zip(rhs.data()) {
            let denom = l.abs().max(r.abs()).max(1.0);
            assert!((l - r).abs() / denom < 1e-12);
        }
    }
}
