//! Forward and backward kernels for the layer vocabulary.
//!
//! Every function here is a pure tensor-in, tensor-out computation; the
//! tape composes them into differentiable graphs. Convolution and dense
//! layers dispatch their inner loops to GEMM through [`Scalar::gemm`],
//! one call per kernel tap, using strided views instead of an im2col copy.

use rand::Rng;

use super::{Tensor, TensorError};
use crate::Scalar;

// ── Geometry ────────────────────────────────────────────────────────────

/// Padding convention for 1D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// No padding; output length `floor((len - kernel) / stride) + 1`.
    Valid,
    /// Zero padding chosen so output length is `ceil(len / stride)`.
    /// When the total is odd the extra zero goes on the right.
    Same,
}

/// Resolved convolution geometry for one layer application.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub out_len: usize,
    pub pad_left: usize,
    pub pad_right: usize,
}

/// Computes output length and padding for a 1D convolution.
pub fn conv_geometry(
    in_len: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> Result<ConvGeometry, TensorError> {
    if kernel == 0 || stride == 0 {
        return Err(TensorError::Geometry {
            context: "conv1d",
            detail: format!("kernel {kernel} and stride {stride} must be positive"),
        });
    }
    match padding {
        Padding::Valid => {
            if kernel > in_len {
                return Err(TensorError::Geometry {
                    context: "conv1d",
                    detail: format!("kernel {kernel} longer than input {in_len} under valid padding"),
                });
            }
            Ok(ConvGeometry {
                out_len: (in_len - kernel) / stride + 1,
                pad_left: 0,
                pad_right: 0,
            })
        }
        Padding::Same => {
            let out_len = in_len.div_ceil(stride);
            let needed = (out_len - 1) * stride + kernel;
            let total = needed.saturating_sub(in_len);
            Ok(ConvGeometry {
                out_len,
                pad_left: total / 2,
                pad_right: total - total / 2,
            })
        }
    }
}

/// Output length of a pooling window sweep; trailing samples that do not
/// fill a complete window are discarded.
pub fn pool_out_len(in_len: usize, pool: usize, stride: usize) -> Result<usize, TensorError> {
    if pool == 0 || stride == 0 {
        return Err(TensorError::Geometry {
            context: "pool1d",
            detail: format!("pool {pool} and stride {stride} must be positive"),
        });
    }
    if pool > in_len {
        return Err(TensorError::Geometry {
            context: "pool1d",
            detail: format!("pool {pool} longer than input {in_len}"),
        });
    }
    Ok((in_len - pool) / stride + 1)
}

fn approx<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("finite accumulator")
}

// ── Convolution ─────────────────────────────────────────────────────────

fn conv_shapes<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    bias: &Tensor<F>,
) -> Result<(usize, usize, usize, usize, usize), TensorError> {
    let (n, c_in, l) = input.as_batch()?;
    let ws = weight.shape();
    if ws.len() != 3 {
        return Err(TensorError::Rank {
            context: "conv1d weight",
            got: ws.len(),
        });
    }
    let (c_out, wc_in, k) = (ws[0], ws[1], ws[2]);
    if wc_in != c_in {
        return Err(TensorError::Shape {
            context: "conv1d",
            detail: format!("input has {c_in} channels, weight expects {wc_in}"),
        });
    }
    if bias.shape() != [c_out] {
        return Err(TensorError::Shape {
            context: "conv1d",
            detail: format!("bias shape {:?} does not match {c_out} filters", bias.shape()),
        });
    }
    Ok((n, c_in, l, c_out, k))
}

/// Writes one padded sample `c_in x (pad_left + l + pad_right)` into `dst`.
fn pad_sample<F: Scalar>(src: &[F], c_in: usize, l: usize, pl: usize, l_pad: usize, dst: &mut [F]) {
    dst.fill(F::zero());
    for ci in 0..c_in {
        dst[ci * l_pad + pl..ci * l_pad + pl + l].copy_from_slice(&src[ci * l..(ci + 1) * l]);
    }
}

/// 1D convolution over a batch of feature maps.
///
/// `input` is `n x c_in x l` (rank 2 is a batch of one), `weight` is
/// `c_out x c_in x k`, `bias` is `c_out`. Output is `n x c_out x out_len`,
/// demoted to rank 2 when the input was rank 2.
pub fn conv1d<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    bias: &Tensor<F>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<F>, TensorError> {
    let (n, c_in, l, c_out, k) = conv_shapes(input, weight, bias)?;
    let geom = conv_geometry(l, k, stride, padding)?;
    let out_len = geom.out_len;
    let l_pad = l + geom.pad_left + geom.pad_right;
    let padded = geom.pad_left != 0 || geom.pad_right != 0;

    let mut out = vec![F::zero(); n * c_out * out_len];
    let mut scratch = if padded { vec![F::zero(); c_in * l_pad] } else { Vec::new() };
    let w = weight.data();
    let b = bias.data();

    for s in 0..n {
        let sample = &input.data()[s * c_in * l..(s + 1) * c_in * l];
        let x: &[F] = if padded {
            pad_sample(sample, c_in, l, geom.pad_left, l_pad, &mut scratch);
            &scratch
        } else {
            sample
        };
        let out_s = &mut out[s * c_out * out_len..(s + 1) * c_out * out_len];
        for tap in 0..k {
            let beta = if tap == 0 { F::zero() } else { F::one() };
            unsafe {
                F::gemm(
                    c_out,
                    c_in,
                    out_len,
                    F::one(),
                    w.as_ptr().add(tap),
                    (c_in * k) as isize,
                    k as isize,
                    x.as_ptr().add(tap),
                    l_pad as isize,
                    stride as isize,
                    beta,
                    out_s.as_mut_ptr(),
                    out_len as isize,
                    1,
                );
            }
        }
        for co in 0..c_out {
            let row = &mut out_s[co * out_len..(co + 1) * out_len];
            for v in row.iter_mut() {
                *v += b[co];
            }
        }
    }

    let shape = if input.rank() == 2 {
        vec![c_out, out_len]
    } else {
        vec![n, c_out, out_len]
    };
    Tensor::new(shape, out)
}

/// Gradients of [`conv1d`] with respect to input, weight and bias.
///
/// `d_input` is skipped when `need_dx` is false (the input is a
/// non-trainable leaf).
pub fn conv1d_backward<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    d_out: &Tensor<F>,
    stride: usize,
    padding: Padding,
    need_dx: bool,
) -> Result<(Option<Tensor<F>>, Tensor<F>, Tensor<F>), TensorError> {
    let (n, c_in, l) = input.as_batch()?;
    let ws = weight.shape();
    let (c_out, k) = (ws[0], ws[2]);
    let geom = conv_geometry(l, k, stride, padding)?;
    let out_len = geom.out_len;
    let l_pad = l + geom.pad_left + geom.pad_right;
    let padded = geom.pad_left != 0 || geom.pad_right != 0;

    let w = weight.data();
    let mut dw = vec![F::zero(); w.len()];
    let mut db64 = vec![0.0f64; c_out];
    let mut dx = if need_dx { vec![F::zero(); n * c_in * l] } else { Vec::new() };
    let mut x_scratch = if padded { vec![F::zero(); c_in * l_pad] } else { Vec::new() };
    let mut dx_scratch = vec![F::zero(); c_in * l_pad];

    for s in 0..n {
        let sample = &input.data()[s * c_in * l..(s + 1) * c_in * l];
        let x: &[F] = if padded {
            pad_sample(sample, c_in, l, geom.pad_left, l_pad, &mut x_scratch);
            &x_scratch
        } else {
            sample
        };
        let dy = &d_out.data()[s * c_out * out_len..(s + 1) * c_out * out_len];

        // dW[co, ci, tap] += sum_t dy[co, t] * x[ci, t*stride + tap]
        for tap in 0..k {
            unsafe {
                F::gemm(
                    c_out,
                    out_len,
                    c_in,
                    F::one(),
                    dy.as_ptr(),
                    out_len as isize,
                    1,
                    x.as_ptr().add(tap),
                    stride as isize,
                    l_pad as isize,
                    F::one(),
                    dw.as_mut_ptr().add(tap),
                    (c_in * k) as isize,
                    k as isize,
                );
            }
        }
        for co in 0..c_out {
            let mut acc = 0.0f64;
            for t in 0..out_len {
                acc += dy[co * out_len + t].to_f64().unwrap_or(0.0);
            }
            db64[co] += acc;
        }

        if need_dx {
            // dXpad[ci, t*stride + tap] += sum_co w[co, ci, tap] * dy[co, t]
            dx_scratch.fill(F::zero());
            for tap in 0..k {
                unsafe {
                    F::gemm(
                        c_in,
                        c_out,
                        out_len,
                        F::one(),
                        w.as_ptr().add(tap),
                        k as isize,
                        (c_in * k) as isize,
                        dy.as_ptr(),
                        out_len as isize,
                        1,
                        F::one(),
                        dx_scratch.as_mut_ptr().add(tap),
                        l_pad as isize,
                        stride as isize,
                    );
                }
            }
            let dx_s = &mut dx[s * c_in * l..(s + 1) * c_in * l];
            for ci in 0..c_in {
                dx_s[ci * l..(ci + 1) * l].copy_from_slice(
                    &dx_scratch[ci * l_pad + geom.pad_left..ci * l_pad + geom.pad_left + l],
                );
            }
        }
    }

    let d_input = if need_dx {
        Some(Tensor::new(input.shape().to_vec(), dx)?)
    } else {
        None
    };
    let d_weight = Tensor::new(weight.shape().to_vec(), dw)?;
    let d_bias = Tensor::from_vec(db64.into_iter().map(approx::<F>).collect())?;
    Ok((d_input, d_weight, d_bias))
}

// ── Dense ───────────────────────────────────────────────────────────────

/// Fully connected layer: `out = input @ weight^T + bias`.
///
/// `input` is `n x d` (rank 1 is a batch of one), `weight` is `units x d`,
/// `bias` is `units`.
pub fn dense<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    bias: &Tensor<F>,
) -> Result<Tensor<F>, TensorError> {
    let (n, d) = input.as_rows()?;
    let ws = weight.shape();
    if ws.len() != 2 || ws[1] != d {
        return Err(TensorError::Shape {
            context: "dense",
            detail: format!("weight shape {ws:?} incompatible with input width {d}"),
        });
    }
    let units = ws[0];
    if bias.shape() != [units] {
        return Err(TensorError::Shape {
            context: "dense",
            detail: format!("bias shape {:?} does not match {units} units", bias.shape()),
        });
    }
    let mut out = vec![F::zero(); n * units];
    unsafe {
        F::gemm(
            n,
            d,
            units,
            F::one(),
            input.data().as_ptr(),
            d as isize,
            1,
            weight.data().as_ptr(),
            1,
            d as isize,
            F::zero(),
            out.as_mut_ptr(),
            units as isize,
            1,
        );
    }
    let b = bias.data();
    for row in out.chunks_exact_mut(units) {
        for (v, &bv) in row.iter_mut().zip(b) {
            *v += bv;
        }
    }
    let shape = if input.rank() == 1 { vec![units] } else { vec![n, units] };
    Tensor::new(shape, out)
}

/// Gradients of [`dense`] with respect to input, weight and bias.
pub fn dense_backward<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    d_out: &Tensor<F>,
    need_dx: bool,
) -> Result<(Option<Tensor<F>>, Tensor<F>, Tensor<F>), TensorError> {
    let (n, d) = input.as_rows()?;
    let units = weight.shape()[0];
    let dy = d_out.data();

    let d_input = if need_dx {
        let mut dx = vec![F::zero(); n * d];
        unsafe {
            F::gemm(
                n,
                units,
                d,
                F::one(),
                dy.as_ptr(),
                units as isize,
                1,
                weight.data().as_ptr(),
                d as isize,
                1,
                F::zero(),
                dx.as_mut_ptr(),
                d as isize,
                1,
            );
        }
        Some(Tensor::new(input.shape().to_vec(), dx)?)
    } else {
        None
    };

    let mut dw = vec![F::zero(); units * d];
    unsafe {
        F::gemm(
            units,
            n,
            d,
            F::one(),
            dy.as_ptr(),
            1,
            units as isize,
            input.data().as_ptr(),
            d as isize,
            1,
            F::zero(),
            dw.as_mut_ptr(),
            d as isize,
            1,
        );
    }
    let mut db = vec![0.0f64; units];
    for row in dy.chunks_exact(units) {
        for (acc, &v) in db.iter_mut().zip(row) {
            *acc += v.to_f64().unwrap_or(0.0);
        }
    }
    let d_weight = Tensor::new(weight.shape().to_vec(), dw)?;
    let d_bias = Tensor::from_vec(db.into_iter().map(approx::<F>).collect())?;
    Ok((d_input, d_weight, d_bias))
}

// ── Pooling ─────────────────────────────────────────────────────────────

/// Max pooling result with the flat in-row index of each window maximum.
pub struct MaxPoolOut<F> {
    pub output: Tensor<F>,
    /// For each output element, the input position (within its channel row)
    /// of the first maximal element of the window.
    pub argmax: Vec<u32>,
}

/// Max pooling over the length axis with floor geometry.
pub fn maxpool1d<F: Scalar>(
    input: &Tensor<F>,
    pool: usize,
    stride: usize,
) -> Result<MaxPoolOut<F>, TensorError> {
    let (n, c, l) = input.as_batch()?;
    let out_len = pool_out_len(l, pool, stride)?;
    let mut out = vec![F::zero(); n * c * out_len];
    let mut argmax = vec![0u32; n * c * out_len];
    for row in 0..n * c {
        let x = &input.data()[row * l..(row + 1) * l];
        let base = row * out_len;
        for t in 0..out_len {
            let start = t * stride;
            let mut best = x[start];
            let mut best_at = start;
            for j in start + 1..start + pool {
                if x[j] > best {
                    best = x[j];
                    best_at = j;
                }
            }
            out[base + t] = best;
            argmax[base + t] = best_at as u32;
        }
    }
    let shape = if input.rank() == 2 { vec![c, out_len] } else { vec![n, c, out_len] };
    Ok(MaxPoolOut {
        output: Tensor::new(shape, out)?,
        argmax,
    })
}

/// Routes each output gradient to the first maximal element of its window.
pub fn maxpool1d_backward<F: Scalar>(
    input_shape: &[usize],
    argmax: &[u32],
    d_out: &Tensor<F>,
) -> Result<Tensor<F>, TensorError> {
    let mut dx = Tensor::zeros(input_shape)?;
    let (n, c, l) = dx.as_batch()?;
    let out_len = d_out.len() / (n * c);
    let dy = d_out.data();
    let data = dx.data_mut();
    for row in 0..n * c {
        let base = row * out_len;
        for t in 0..out_len {
            data[row * l + argmax[base + t] as usize] += dy[base + t];
        }
    }
    Ok(dx)
}

/// Average pooling over the length axis with floor geometry.
pub fn avgpool1d<F: Scalar>(
    input: &Tensor<F>,
    pool: usize,
    stride: usize,
) -> Result<Tensor<F>, TensorError> {
    let (n, c, l) = input.as_batch()?;
    let out_len = pool_out_len(l, pool, stride)?;
    let inv = F::one() / approx::<F>(pool as f64);
    let mut out = vec![F::zero(); n * c * out_len];
    for row in 0..n * c {
        let x = &input.data()[row * l..(row + 1) * l];
        let base = row * out_len;
        for t in 0..out_len {
            let start = t * stride;
            let mut acc = F::zero();
            for &v in &x[start..start + pool] {
                acc += v;
            }
            out[base + t] = acc * inv;
        }
    }
    let shape = if input.rank() == 2 { vec![c, out_len] } else { vec![n, c, out_len] };
    Tensor::new(shape, out)
}

/// Distributes each output gradient equally over its window.
pub fn avgpool1d_backward<F: Scalar>(
    input_shape: &[usize],
    pool: usize,
    stride: usize,
    d_out: &Tensor<F>,
) -> Result<Tensor<F>, TensorError> {
    let mut dx = Tensor::zeros(input_shape)?;
    let (n, c, l) = dx.as_batch()?;
    let out_len = d_out.len() / (n * c);
    let inv = F::one() / approx::<F>(pool as f64);
    let dy = d_out.data();
    let data = dx.data_mut();
    for row in 0..n * c {
        let base = row * out_len;
        for t in 0..out_len {
            let g = dy[base + t] * inv;
            let start = row * l + t * stride;
            for v in &mut data[start..start + pool] {
                *v += g;
            }
        }
    }
    Ok(dx)
}

// ── Batch normalization ─────────────────────────────────────────────────

/// Per-channel statistics saved by the training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnStats<F> {
    pub mean: Vec<F>,
    /// Biased variance (divided by the element count).
    pub var: Vec<F>,
    pub inv_std: Vec<F>,
}

fn bn_shapes<F: Scalar>(
    input: &Tensor<F>,
    gamma: &Tensor<F>,
    beta: &Tensor<F>,
) -> Result<(usize, usize, usize), TensorError> {
    let (n, c, l) = input.as_batch()?;
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(TensorError::Shape {
            context: "batchnorm1d",
            detail: format!(
                "gamma {:?} / beta {:?} do not match {c} channels",
                gamma.shape(),
                beta.shape()
            ),
        });
    }
    Ok((n, c, l))
}

/// Training-mode batch normalization over batch and length jointly.
pub fn batchnorm_train<F: Scalar>(
    input: &Tensor<F>,
    gamma: &Tensor<F>,
    beta: &Tensor<F>,
    eps: f64,
) -> Result<(Tensor<F>, BnStats<F>), TensorError> {
    let (n, c, l) = bn_shapes(input, gamma, beta)?;
    let m = (n * l) as f64;
    let x = input.data();
    let mut mean64 = vec![0.0f64; c];
    let mut var64 = vec![0.0f64; c];
    for s in 0..n {
        for ch in 0..c {
            let row = &x[(s * c + ch) * l..(s * c + ch + 1) * l];
            let mut acc = 0.0f64;
            for &v in row {
                acc += v.to_f64().unwrap_or(0.0);
            }
            mean64[ch] += acc;
        }
    }
    for v in mean64.iter_mut() {
        *v /= m;
    }
    for s in 0..n {
        for ch in 0..c {
            let row = &x[(s * c + ch) * l..(s * c + ch + 1) * l];
            let mu = mean64[ch];
            let mut acc = 0.0f64;
            for &v in row {
                let d = v.to_f64().unwrap_or(0.0) - mu;
                acc += d * d;
            }
            var64[ch] += acc;
        }
    }
    for v in var64.iter_mut() {
        *v /= m;
    }

    let mean: Vec<F> = mean64.iter().map(|&v| approx(v)).collect();
    let var: Vec<F> = var64.iter().map(|&v| approx(v)).collect();
    let inv_std: Vec<F> = var64.iter().map(|&v| approx(1.0 / (v + eps).sqrt())).collect();

    let g = gamma.data();
    let b = beta.data();
    let mut out = vec![F::zero(); x.len()];
    for s in 0..n {
        for ch in 0..c {
            let off = (s * c + ch) * l;
            let scale = g[ch] * inv_std[ch];
            let shift = b[ch] - mean[ch] * scale;
            for t in 0..l {
                out[off + t] = x[off + t] * scale + shift;
            }
        }
    }
    Ok((
        Tensor::new(input.shape().to_vec(), out)?,
        BnStats { mean, var, inv_std },
    ))
}

/// Inference-mode batch normalization using running statistics.
pub fn batchnorm_infer<F: Scalar>(
    input: &Tensor<F>,
    gamma: &Tensor<F>,
    beta: &Tensor<F>,
    running_mean: &Tensor<F>,
    running_var: &Tensor<F>,
    eps: f64,
) -> Result<Tensor<F>, TensorError> {
    let (n, c, l) = bn_shapes(input, gamma, beta)?;
    if running_mean.shape() != [c] || running_var.shape() != [c] {
        return Err(TensorError::Shape {
            context: "batchnorm1d",
            detail: "running statistics do not match channel count".into(),
        });
    }
    let x = input.data();
    let g = gamma.data();
    let b = beta.data();
    let rm = running_mean.data();
    let rv = running_var.data();
    let mut out = vec![F::zero(); x.len()];
    for s in 0..n {
        for ch in 0..c {
            let off = (s * c + ch) * l;
            let istd = approx::<F>(1.0 / (rv[ch].to_f64().unwrap_or(0.0) + eps).sqrt());
            let scale = g[ch] * istd;
            let shift = b[ch] - rm[ch] * scale;
            for t in 0..l {
                out[off + t] = x[off + t] * scale + shift;
            }
        }
    }
    Tensor::new(input.shape().to_vec(), out)
}

/// Gradients of training-mode batch normalization.
pub fn batchnorm_backward_train<F: Scalar>(
    input: &Tensor<F>,
    gamma: &Tensor<F>,
    stats: &BnStats<F>,
    d_out: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>), TensorError> {
    let (n, c, l) = input.as_batch()?;
    let m = (n * l) as f64;
    let x = input.data();
    let dy = d_out.data();
    let mut dgamma64 = vec![0.0f64; c];
    let mut dbeta64 = vec![0.0f64; c];
    for s in 0..n {
        for ch in 0..c {
            let off = (s * c + ch) * l;
            let mu = stats.mean[ch].to_f64().unwrap_or(0.0);
            let istd = stats.inv_std[ch].to_f64().unwrap_or(0.0);
            let mut dg = 0.0f64;
            let mut db = 0.0f64;
            for t in 0..l {
                let xhat = (x[off + t].to_f64().unwrap_or(0.0) - mu) * istd;
                let g = dy[off + t].to_f64().unwrap_or(0.0);
                dg += g * xhat;
                db += g;
            }
            dgamma64[ch] += dg;
            dbeta64[ch] += db;
        }
    }
    let mut dx = vec![F::zero(); x.len()];
    for s in 0..n {
        for ch in 0..c {
            let off = (s * c + ch) * l;
            let mu = stats.mean[ch];
            let istd = stats.inv_std[ch];
            let coeff = gamma.data()[ch] * istd * approx::<F>(1.0 / m);
            let dbeta = approx::<F>(dbeta64[ch]);
            let dgamma = approx::<F>(dgamma64[ch]);
            let m_f = approx::<F>(m);
            for t in 0..l {
                let xhat = (x[off + t] - mu) * istd;
                dx[off + t] = coeff * (m_f * dy[off + t] - dbeta - xhat * dgamma);
            }
        }
    }
    Ok((
        Tensor::new(input.shape().to_vec(), dx)?,
        Tensor::from_vec(dgamma64.into_iter().map(approx::<F>).collect())?,
        Tensor::from_vec(dbeta64.into_iter().map(approx::<F>).collect())?,
    ))
}

/// Gradients of inference-mode batch normalization (running statistics are
/// constants, so the input gradient is a per-channel scaling).
pub fn batchnorm_backward_infer<F: Scalar>(
    input: &Tensor<F>,
    gamma: &Tensor<F>,
    running_mean: &Tensor<F>,
    running_var: &Tensor<F>,
    eps: f64,
    d_out: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>), TensorError> {
    let (n, c, l) = input.as_batch()?;
    let x = input.data();
    let dy = d_out.data();
    let mut dx = vec![F::zero(); x.len()];
    let mut dgamma64 = vec![0.0f64; c];
    let mut dbeta64 = vec![0.0f64; c];
    for s in 0..n {
        for ch in 0..c {
            let off = (s * c + ch) * l;
            let mu = running_mean.data()[ch].to_f64().unwrap_or(0.0);
            let istd = 1.0 / (running_var.data()[ch].to_f64().unwrap_or(0.0) + eps).sqrt();
            let scale = gamma.data()[ch] * approx::<F>(istd);
            for t in 0..l {
                let g = dy[off + t];
                dx[off + t] = g * scale;
                let xhat = (x[off + t].to_f64().unwrap_or(0.0) - mu) * istd;
                dgamma64[ch] += g.to_f64().unwrap_or(0.0) * xhat;
                dbeta64[ch] += g.to_f64().unwrap_or(0.0);
            }
        }
    }
    Ok((
        Tensor::new(input.shape().to_vec(), dx)?,
        Tensor::from_vec(dgamma64.into_iter().map(approx::<F>).collect())?,
        Tensor::from_vec(dbeta64.into_iter().map(approx::<F>).collect())?,
    ))
}

/// Exponential moving average update for running statistics:
/// `running = (1 - momentum) * running + momentum * batch`.
pub fn ema_update<F: Scalar>(running: &mut [F], batch: &[F], momentum: f64) {
    let m = approx::<F>(momentum);
    let keep = F::one() - m;
    for (r, &b) in running.iter_mut().zip(batch) {
        *r = *r * keep + b * m;
    }
}

// ── Activations ─────────────────────────────────────────────────────────

pub fn relu<F: Scalar>(input: &Tensor<F>) -> Tensor<F> {
    let data = input.data().iter().map(|&v| v.max(F::zero())).collect();
    Tensor::new(input.shape().to_vec(), data).expect("shape preserved")
}

pub fn relu_backward<F: Scalar>(input: &Tensor<F>, d_out: &Tensor<F>) -> Tensor<F> {
    let data = input
        .data()
        .iter()
        .zip(d_out.data())
        .map(|(&x, &g)| if x > F::zero() { g } else { F::zero() })
        .collect();
    Tensor::new(input.shape().to_vec(), data).expect("shape preserved")
}

pub fn leaky_relu<F: Scalar>(input: &Tensor<F>, slope: f64) -> Tensor<F> {
    let a = approx::<F>(slope);
    let data = input
        .data()
        .iter()
        .map(|&v| if v > F::zero() { v } else { v * a })
        .collect();
    Tensor::new(input.shape().to_vec(), data).expect("shape preserved")
}

pub fn leaky_relu_backward<F: Scalar>(input: &Tensor<F>, slope: f64, d_out: &Tensor<F>) -> Tensor<F> {
    let a = approx::<F>(slope);
    let data = input
        .data()
        .iter()
        .zip(d_out.data())
        .map(|(&x, &g)| if x > F::zero() { g } else { g * a })
        .collect();
    Tensor::new(input.shape().to_vec(), data).expect("shape preserved")
}

pub fn sigmoid<F: Scalar>(input: &Tensor<F>) -> Tensor<F> {
    let data = input
        .data()
        .iter()
        .map(|&v| {
            // Split on sign so exp never overflows.
            if v >= F::zero() {
                F::one() / (F::one() + (-v).exp())
            } else {
                let e = v.exp();
                e / (F::one() + e)
            }
        })
        .collect();
    Tensor::new(input.shape().to_vec(), data).expect("shape preserved")
}

/// Sigmoid gradient from the saved output: `dy * y * (1 - y)`.
pub fn sigmoid_backward<F: Scalar>(output: &Tensor<F>, d_out: &Tensor<F>) -> Tensor<F> {
    let data = output
        .data()
        .iter()
        .zip(d_out.data())
        .map(|(&y, &g)| g * y * (F::one() - y))
        .collect();
    Tensor::new(output.shape().to_vec(), data).expect("shape preserved")
}

/// Softmax over the last axis (rank 1: the whole vector; rank 2: each row).
/// Stabilized by subtracting the row maximum before exponentiation.
pub fn softmax<F: Scalar>(input: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
    let (n, d) = input.as_rows()?;
    let x = input.data();
    let mut out = vec![F::zero(); x.len()];
    for r in 0..n {
        let row = &x[r * d..(r + 1) * d];
        let m = row.iter().cloned().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for (o, &v) in out[r * d..(r + 1) * d].iter_mut().zip(row) {
            let e = (v - m).exp();
            *o = e;
            sum += e;
        }
        let inv = F::one() / sum;
        for o in &mut out[r * d..(r + 1) * d] {
            *o *= inv;
        }
    }
    Tensor::new(input.shape().to_vec(), out)
}

/// Softmax gradient from the saved output:
/// `dx_i = y_i * (dy_i - sum_j dy_j * y_j)` per row.
pub fn softmax_backward<F: Scalar>(output: &Tensor<F>, d_out: &Tensor<F>) -> Tensor<F> {
    let (n, d) = output.as_rows().expect("softmax output is rows");
    let y = output.data();
    let dy = d_out.data();
    let mut dx = vec![F::zero(); y.len()];
    for r in 0..n {
        let off = r * d;
        let mut dot = F::zero();
        for j in 0..d {
            dot += dy[off + j] * y[off + j];
        }
        for j in 0..d {
            dx[off + j] = y[off + j] * (dy[off + j] - dot);
        }
    }
    Tensor::new(output.shape().to_vec(), dx).expect("shape preserved")
}

// ── Dropout ─────────────────────────────────────────────────────────────

/// Inverted dropout. In training mode each element is zeroed with
/// probability `p` and survivors are scaled by `1 / (1 - p)`, so the
/// expected value is unchanged; in inference mode this is the identity.
///
/// Returns the output and, in training mode with `p > 0`, the multiplier
/// mask needed by the backward pass.
pub fn dropout<F: Scalar, R: Rng>(
    input: &Tensor<F>,
    p: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor<F>, Option<Vec<F>>), TensorError> {
    if !(0.0..1.0).contains(&p) {
        return Err(TensorError::Geometry {
            context: "dropout",
            detail: format!("rate {p} outside [0, 1)"),
        });
    }
    if !training || p == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep_scale = approx::<F>(1.0 / (1.0 - p));
    let mut mask = vec![F::zero(); input.len()];
    let mut out = vec![F::zero(); input.len()];
    for (i, &v) in input.data().iter().enumerate() {
        if rng.random::<f64>() >= p {
            mask[i] = keep_scale;
            out[i] = v * keep_scale;
        }
    }
    Ok((Tensor::new(input.shape().to_vec(), out)?, Some(mask)))
}

pub fn dropout_backward<F: Scalar>(mask: &[F], d_out: &Tensor<F>) -> Tensor<F> {
    let data = d_out.data().iter().zip(mask).map(|(&g, &m)| g * m).collect();
    Tensor::new(d_out.shape().to_vec(), data).expect("shape preserved")
}

// ── Loss ────────────────────────────────────────────────────────────────

/// Softmax cross-entropy over a batch of logits.
pub struct CrossEntropyOut<F> {
    /// Mean negative log-likelihood over the batch.
    pub loss: F,
    /// Softmax probabilities, saved for the backward pass.
    pub probs: Tensor<F>,
}

/// Mean cross-entropy between `logits` (`n x classes`) and integer labels.
pub fn cross_entropy<F: Scalar>(
    logits: &Tensor<F>,
    labels: &[usize],
) -> Result<CrossEntropyOut<F>, TensorError> {
    let (n, classes) = logits.as_rows()?;
    if labels.len() != n {
        return Err(TensorError::Shape {
            context: "cross_entropy",
            detail: format!("{} labels for a batch of {n}", labels.len()),
        });
    }
    for &y in labels {
        if y >= classes {
            return Err(TensorError::Label { classes, label: y });
        }
    }
    let probs = softmax(logits)?;
    let p = probs.data();
    let mut acc = 0.0f64;
    for (r, &y) in labels.iter().enumerate() {
        let v = p[r * classes + y].to_f64().unwrap_or(0.0);
        acc -= v.max(f64::MIN_POSITIVE).ln();
    }
    Ok(CrossEntropyOut {
        loss: approx(acc / n as f64),
        probs,
    })
}

/// Gradient of [`cross_entropy`] with respect to the logits:
/// `(softmax - one_hot) / n`, scaled by the upstream gradient.
pub fn cross_entropy_backward<F: Scalar>(
    probs: &Tensor<F>,
    labels: &[usize],
    upstream: F,
) -> Tensor<F> {
    let (n, classes) = probs.as_rows().expect("probs are rows");
    let scale = upstream / approx::<F>(n as f64);
    let mut dx = probs.data().to_vec();
    for (r, &y) in labels.iter().enumerate() {
        dx[r * classes + y] -= F::one();
    }
    for v in dx.iter_mut() {
        *v = *v * scale;
    }
    Tensor::new(probs.shape().to_vec(), dx).expect("shape preserved")
}

// ── Structural ──────────────────────────────────────────────────────────

/// Elementwise sum of two tensors of identical shape.
pub fn add<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
    if a.shape() != b.shape() {
        return Err(TensorError::Shape {
            context: "add",
            detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
        });
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Tensor::new(a.shape().to_vec(), data)
}

/// Flattens feature maps channel-major: `n x c x l` becomes `n x (c * l)`.
pub fn flatten<F: Scalar>(input: &Tensor<F>) -> Result<Tensor<F>, TensorError> {
    let (n, c, l) = input.as_batch()?;
    if input.rank() == 2 {
        input.reshape(vec![c * l])
    } else {
        input.reshape(vec![n, c * l])
    }
}

/// Sum of all elements, as a scalar tensor.
pub fn sum<F: Scalar>(input: &Tensor<F>) -> Tensor<F> {
    let mut acc = 0.0f64;
    for &v in input.data() {
        acc += v.to_f64().unwrap_or(0.0);
    }
    Tensor::scalar(approx(acc))
}
