//! Layer kernels on NCHW batches. Every kernel is deterministic: per-sample
//! work runs in parallel, and reductions over the batch use fixed sample groups
//! summed in order, so results do not depend on the thread count.

use rayon::prelude::*;

use super::tensor::{Activation, Scalar, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Samples per partial sum in batch reductions.
const GROUP: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h: usize,
    pub w: usize,
    pub ho: usize,
    pub wo: usize,
}

/// Output edge for a window of `k` with padding `k / 2`.
pub fn out_size(n: usize, k: usize, stride: usize) -> usize {
    (n + 2 * (k / 2) - k) / stride + 1
}

impl ConvShape {
    pub fn new(cin: usize, cout: usize, k: usize, stride: usize, h: usize, w: usize) -> Self {
        ConvShape {
            cin,
            cout,
            k,
            stride,
            pad: k / 2,
            h,
            w,
            ho: out_size(h, k, stride),
            wo: out_size(w, k, stride),
        }
    }

    fn direct(&self) -> bool {
        self.k == 1 && self.stride == 1
    }

    fn col_rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn out_plane(&self) -> usize {
        self.ho * self.wo
    }

    /// Output columns `ox` whose input column `ox * stride + kj - pad` is inside the row.
    fn valid_cols(&self, kj: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(kj).div_ceil(self.stride);
        let hi = if self.w + self.pad > kj {
            ((self.w + self.pad - kj - 1) / self.stride + 1).min(self.wo)
        } else {
            0
        };
        (lo, hi.max(lo))
    }
}

fn im2col<T: Scalar>(x: &[T], s: &ConvShape, col: &mut [T]) {
    let p = s.out_plane();
    let plane = s.h * s.w;
    for ci in 0..s.cin {
        let src = &x[ci * plane..(ci + 1) * plane];
        for ki in 0..s.k {
            for kj in 0..s.k {
                let row = (ci * s.k + ki) * s.k + kj;
                let dst = &mut col[row * p..(row + 1) * p];
                let (lo, hi) = s.valid_cols(kj);
                for oy in 0..s.ho {
                    let d = &mut dst[oy * s.wo..(oy + 1) * s.wo];
                    let iy = (oy * s.stride + ki) as isize - s.pad as isize;
                    if iy < 0 || iy >= s.h as isize {
                        d.fill(T::zero());
                        continue;
                    }
                    let r = &src[iy as usize * s.w..(iy as usize + 1) * s.w];
                    d[..lo].fill(T::zero());
                    d[hi..].fill(T::zero());
                    if s.stride == 1 {
                        let start = lo + kj - s.pad;
                        d[lo..hi].copy_from_slice(&r[start..start + (hi - lo)]);
                    } else {
                        for (ox, v) in d[lo..hi].iter_mut().enumerate() {
                            *v = r[(ox + lo) * s.stride + kj - s.pad];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(col: &[T], s: &ConvShape, dx: &mut [T]) {
    let p = s.out_plane();
    let plane = s.h * s.w;
    for ci in 0..s.cin {
        let dst = &mut dx[ci * plane..(ci + 1) * plane];
        for ki in 0..s.k {
            for kj in 0..s.k {
                let row = (ci * s.k + ki) * s.k + kj;
                let src = &col[row * p..(row + 1) * p];
                let (lo, hi) = s.valid_cols(kj);
                for oy in 0..s.ho {
                    let iy = (oy * s.stride + ki) as isize - s.pad as isize;
                    if iy < 0 || iy >= s.h as isize {
                        continue;
                    }
                    let r = &mut dst[iy as usize * s.w..(iy as usize + 1) * s.w];
                    let c = &src[oy * s.wo..(oy + 1) * s.wo];
                    for ox in lo..hi {
                        r[ox * s.stride + kj - s.pad] += c[ox];
                    }
                }
            }
        }
    }
}

fn conv_shape<T: Scalar>(x: &Activation<T>, weight: &Tensor<T>, stride: usize) -> ConvShape {
    assert_eq!(weight.shape.len(), 4, "conv weight must be 4-d");
    assert_eq!(weight.shape[1], x.c, "conv input channels");
    assert_eq!(weight.shape[2], weight.shape[3], "square kernels only");
    ConvShape::new(x.c, weight.shape[0], weight.shape[2], stride, x.h, x.w)
}

/// Bias-free convolution with `k / 2` zero padding.
pub fn conv_forward<T: Scalar>(x: &Activation<T>, weight: &Tensor<T>, stride: usize) -> Activation<T> {
    let s = conv_shape(x, weight, stride);
    let p = s.out_plane();
    let kk = s.col_rows();
    let mut out = Activation::zeros(x.n, s.cout, s.ho, s.wo);
    if x.n == 0 {
        return out;
    }
    let col_len = if s.direct() { 0 } else { kk * p };
    out.data
        .par_chunks_mut(s.cout * p)
        .zip(x.data.par_chunks(x.sample_len()))
        .for_each_init(
            || vec![T::zero(); col_len],
            |col, (o, xi)| {
                let b: &[T] = if s.direct() {
                    xi
                } else {
                    im2col(xi, &s, col);
                    col
                };
                T::gemm(
                    s.cout, kk, p, T::one(), &weight.data, kk as isize, 1, b, p as isize, 1, T::zero(), o,
                    p as isize, 1,
                );
            },
        );
    out
}

/// Gradients of a convolution: input gradient (when requested) and weight gradient.
pub fn conv_backward<T: Scalar>(
    x: &Activation<T>,
    weight: &Tensor<T>,
    stride: usize,
    dy: &Activation<T>,
    need_dx: bool,
) -> (Option<Activation<T>>, Tensor<T>) {
    let s = conv_shape(x, weight, stride);
    assert_eq!(dy.shape(), [x.n, s.cout, s.ho, s.wo], "conv output gradient shape");
    let p = s.out_plane();
    let kk = s.col_rows();
    let col_len = if s.direct() { 0 } else { kk * p };

    let partials: Vec<Vec<T>> = (0..x.n.div_ceil(GROUP))
        .into_par_iter()
        .map(|g| {
            let mut acc = vec![T::zero(); s.cout * kk];
            let mut col = vec![T::zero(); col_len];
            for i in g * GROUP..((g + 1) * GROUP).min(x.n) {
                let b: &[T] = if s.direct() {
                    x.sample(i)
                } else {
                    im2col(x.sample(i), &s, &mut col);
                    &col
                };
                // dW += dy_i [cout x p] * col^T [p x kk]
                T::gemm(
                    s.cout, p, kk, T::one(), dy.sample(i), p as isize, 1, b, 1, p as isize, T::one(), &mut acc,
                    kk as isize, 1,
                );
            }
            acc
        })
        .collect();
    let mut dw = Tensor::zeros(&weight.shape);
    for part in &partials {
        for (d, v) in dw.data.iter_mut().zip(part) {
            *d += *v;
        }
    }

    let dx = need_dx.then(|| {
        let mut dx = x.same_shape();
        dx.data
            .par_chunks_mut(x.sample_len())
            .zip(dy.data.par_chunks(dy.sample_len()))
            .for_each_init(
                || vec![T::zero(); col_len],
                |col, (dxi, dyi)| {
                    // W^T [kk x cout] * dy_i [cout x p]
                    if s.direct() {
                        T::gemm(
                            kk, s.cout, p, T::one(), &weight.data, 1, kk as isize, dyi, p as isize, 1, T::zero(), dxi,
                            p as isize, 1,
                        );
                    } else {
                        T::gemm(
                            kk, s.cout, p, T::one(), &weight.data, 1, kk as isize, dyi, p as isize, 1, T::zero(), col,
                            p as isize, 1,
                        );
                        col2im(col, &s, dxi);
                    }
                },
            );
        dx
    });
    (dx, dw)
}

/// Batch statistics of one training-mode batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BnBatchStats {
    pub mean: Vec<f64>,
    /// Unbiased variance, as used for the running estimate.
    pub var: Vec<f64>,
}

/// Normalized activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub xhat: Activation<T>,
    pub inv_std: Vec<T>,
}

fn channel_planes<T: Scalar>(a: &Activation<T>, c: usize) -> impl Iterator<Item = &[T]> + '_ {
    let plane = a.plane();
    (0..a.n).map(move |i| &a.sample(i)[c * plane..(c + 1) * plane])
}

/// Normalizes with batch statistics (biased variance, as in the forward pass
/// of batch norm).
pub fn bn_normalize<T: Scalar>(x: &Activation<T>) -> (BnCache<T>, BnBatchStats) {
    let m = (x.n * x.plane()) as f64;
    let moments: Vec<(f64, f64)> = (0..x.c)
        .into_par_iter()
        .map(|c| {
            let sum: f64 = channel_planes(x, c)
                .map(|p| p.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).sum::<f64>())
                .sum();
            let mean = sum / m;
            let ss: f64 = channel_planes(x, c)
                .map(|p| {
                    p.iter()
                        .map(|v| {
                            let d = v.to_f64().unwrap_or(f64::NAN) - mean;
                            d * d
                        })
                        .sum::<f64>()
                })
                .sum();
            (mean, ss)
        })
        .collect();
    let inv_std: Vec<T> = moments
        .iter()
        .map(|&(_, ss)| T::from_f64_lossy(1.0 / (ss / m + BN_EPS).sqrt()))
        .collect();
    let means: Vec<T> = moments.iter().map(|&(mu, _)| T::from_f64_lossy(mu)).collect();
    let mut xhat = x.same_shape();
    let plane = x.plane();
    xhat.data
        .par_chunks_mut(x.sample_len())
        .zip(x.data.par_chunks(x.sample_len()))
        .for_each(|(o, xi)| {
            for c in 0..x.c {
                let (mu, is) = (means[c], inv_std[c]);
                for (d, &v) in o[c * plane..(c + 1) * plane].iter_mut().zip(&xi[c * plane..(c + 1) * plane]) {
                    *d = (v - mu) * is;
                }
            }
        });
    let stats = BnBatchStats {
        mean: moments.iter().map(|&(mu, _)| mu).collect(),
        var: moments
            .iter()
            .map(|&(_, ss)| if m > 1.0 { ss / (m - 1.0) } else { 0.0 })
            .collect(),
    };
    (BnCache { xhat, inv_std }, stats)
}

/// `y = gamma * xhat + beta`, optionally followed by ReLU.
pub fn bn_affine<T: Scalar>(xhat: &Activation<T>, gamma: &Tensor<T>, beta: &Tensor<T>, relu: bool) -> Activation<T> {
    let plane = xhat.plane();
    let mut y = xhat.same_shape();
    y.data
        .par_chunks_mut(xhat.sample_len())
        .zip(xhat.data.par_chunks(xhat.sample_len()))
        .for_each(|(o, xi)| {
            for c in 0..xhat.c {
                let (g, b) = (gamma.data[c], beta.data[c]);
                for (d, &v) in o[c * plane..(c + 1) * plane].iter_mut().zip(&xi[c * plane..(c + 1) * plane]) {
                    let z = g * v + b;
                    *d = if relu && z < T::zero() { T::zero() } else { z };
                }
            }
        });
    y
}

/// Inference-mode batch norm from running statistics, optionally followed by ReLU.
pub fn bn_eval<T: Scalar>(
    x: &Activation<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    relu: bool,
) -> Activation<T> {
    let eps = T::from_f64_lossy(BN_EPS);
    let scale: Vec<T> = (0..x.c)
        .map(|c| gamma.data[c] / (running_var.data[c] + eps).sqrt())
        .collect();
    let shift: Vec<T> = (0..x.c)
        .map(|c| beta.data[c] - running_mean.data[c] * scale[c])
        .collect();
    let plane = x.plane();
    let mut y = x.same_shape();
    y.data
        .par_chunks_mut(x.sample_len())
        .zip(x.data.par_chunks(x.sample_len()))
        .for_each(|(o, xi)| {
            for c in 0..x.c {
                for (d, &v) in o[c * plane..(c + 1) * plane].iter_mut().zip(&xi[c * plane..(c + 1) * plane]) {
                    let z = scale[c] * v + shift[c];
                    *d = if relu && z < T::zero() { T::zero() } else { z };
                }
            }
        });
    y
}

/// Backward through `y = gamma * xhat + beta` with batch statistics.
/// Returns `(dx, dgamma, dbeta)`.
pub fn bn_backward<T: Scalar>(
    dy: &Activation<T>,
    cache: &BnCache<T>,
    gamma: &Tensor<T>,
) -> (Activation<T>, Tensor<T>, Tensor<T>) {
    let xhat = &cache.xhat;
    let m = (dy.n * dy.plane()) as f64;
    let sums: Vec<(f64, f64)> = (0..dy.c)
        .into_par_iter()
        .map(|c| {
            let mut sdy = 0.0;
            let mut sdyx = 0.0;
            for (pd, px) in channel_planes(dy, c).zip(channel_planes(xhat, c)) {
                for (&d, &x) in pd.iter().zip(px) {
                    let d = d.to_f64().unwrap_or(f64::NAN);
                    sdy += d;
                    sdyx += d * x.to_f64().unwrap_or(f64::NAN);
                }
            }
            (sdy, sdyx)
        })
        .collect();
    let dgamma = Tensor::from_vec(&[dy.c], sums.iter().map(|&(_, s)| T::from_f64_lossy(s)).collect());
    let dbeta = Tensor::from_vec(&[dy.c], sums.iter().map(|&(s, _)| T::from_f64_lossy(s)).collect());
    let coef: Vec<(T, T, T)> = (0..dy.c)
        .map(|c| {
            (
                gamma.data[c] * cache.inv_std[c],
                T::from_f64_lossy(sums[c].0 / m),
                T::from_f64_lossy(sums[c].1 / m),
            )
        })
        .collect();
    let plane = dy.plane();
    let mut dx = dy.same_shape();
    dx.data
        .par_chunks_mut(dy.sample_len())
        .zip(dy.data.par_chunks(dy.sample_len()).zip(xhat.data.par_chunks(dy.sample_len())))
        .for_each(|(o, (di, xi))| {
            for (c, &(k, mdy, mdyx)) in coef.iter().enumerate() {
                let r = c * plane..(c + 1) * plane;
                for ((d, &g), &xh) in o[r.clone()].iter_mut().zip(&di[r.clone()]).zip(&xi[r]) {
                    *d = k * (g - mdy - xh * mdyx);
                }
            }
        });
    (dx, dgamma, dbeta)
}

/// Zeroes gradient entries where the ReLU output was not positive.
pub fn relu_backward_inplace<T: Scalar>(grad: &mut Activation<T>, out: &Activation<T>) {
    assert_eq!(grad.shape(), out.shape(), "relu gradient shape");
    let chunk = grad.sample_len().max(1);
    grad.data
        .par_chunks_mut(chunk)
        .zip(out.data.par_chunks(chunk))
        .for_each(|(g, o)| {
            for (g, &o) in g.iter_mut().zip(o) {
                if o <= T::zero() {
                    *g = T::zero();
                }
            }
        });
}

pub fn add_inplace<T: Scalar>(a: &mut Activation<T>, b: &Activation<T>) {
    assert_eq!(a.shape(), b.shape(), "add shape mismatch");
    for (x, &y) in a.data.iter_mut().zip(&b.data) {
        *x += y;
    }
}

/// `relu(a + b)` in place on `a`.
pub fn add_relu_inplace<T: Scalar>(a: &mut Activation<T>, b: &Activation<T>) {
    assert_eq!(a.shape(), b.shape(), "add shape mismatch");
    for (x, &y) in a.data.iter_mut().zip(&b.data) {
        let z = *x + y;
        *x = if z < T::zero() { T::zero() } else { z };
    }
}

/// Max pooling with `k / 2` implicit negative-infinity padding. Returns the
/// pooled batch and, per output element, the flat in-plane index of its
/// maximum (first maximum on ties).
pub fn maxpool_forward<T: Scalar>(x: &Activation<T>, k: usize, stride: usize) -> (Activation<T>, Vec<u32>) {
    let (ho, wo) = (out_size(x.h, k, stride), out_size(x.w, k, stride));
    let pad = (k / 2) as isize;
    let mut out = Activation::zeros(x.n, x.c, ho, wo);
    let mut idx = vec![0u32; out.data.len()];
    let (h, w) = (x.h as isize, x.w as isize);
    let in_plane = x.plane();
    out.data
        .par_chunks_mut(ho * wo)
        .zip(idx.par_chunks_mut(ho * wo))
        .enumerate()
        .for_each(|(pi, (o, ix))| {
            let src = &x.data[pi * in_plane..(pi + 1) * in_plane];
            for oy in 0..ho {
                let y0 = oy as isize * stride as isize - pad;
                for ox in 0..wo {
                    let x0 = ox as isize * stride as isize - pad;
                    let mut best = T::neg_infinity();
                    let mut arg = 0usize;
                    for yy in y0.max(0)..(y0 + k as isize).min(h) {
                        for xx in x0.max(0)..(x0 + k as isize).min(w) {
                            let j = (yy * w + xx) as usize;
                            if src[j] > best {
                                best = src[j];
                                arg = j;
                            }
                        }
                    }
                    o[oy * wo + ox] = best;
                    ix[oy * wo + ox] = arg as u32;
                }
            }
        });
    (out, idx)
}

pub fn maxpool_backward<T: Scalar>(dy: &Activation<T>, idx: &[u32], input_shape: [usize; 4]) -> Activation<T> {
    let [n, c, h, w] = input_shape;
    let mut dx = Activation::zeros(n, c, h, w);
    let out_plane = dy.plane();
    dx.data
        .par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(pi, d)| {
            let g = &dy.data[pi * out_plane..(pi + 1) * out_plane];
            let ix = &idx[pi * out_plane..(pi + 1) * out_plane];
            for (&v, &j) in g.iter().zip(ix) {
                d[j as usize] += v;
            }
        });
    dx
}

/// Global average pool to an `[n, c]` tensor.
pub fn global_avg_pool<T: Scalar>(x: &Activation<T>) -> Tensor<T> {
    let plane = x.plane();
    let data: Vec<T> = x
        .data
        .par_chunks(plane.max(1))
        .map(|p| T::from_f64_lossy(p.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).sum::<f64>() / plane as f64))
        .collect();
    Tensor::from_vec(&[x.n, x.c], data)
}

pub fn global_avg_pool_backward<T: Scalar>(dfeat: &Tensor<T>, shape: [usize; 4]) -> Activation<T> {
    let [n, c, h, w] = shape;
    let scale = T::from_f64_lossy(1.0 / (h * w) as f64);
    let mut dx = Activation::zeros(n, c, h, w);
    dx.data
        .par_chunks_mut(h * w)
        .zip(dfeat.data.par_iter())
        .for_each(|(p, &g)| p.fill(g * scale));
    dx
}

/// `logits = feat * weight^T + bias`, with `weight` shaped `[classes, features]`.
pub fn linear_forward<T: Scalar>(feat: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Tensor<T> {
    let (n, c) = (feat.shape[0], feat.shape[1]);
    let k = weight.shape[0];
    assert_eq!(weight.shape[1], c, "head input width");
    let mut out: Vec<T> = (0..n).flat_map(|_| bias.data.iter().copied()).collect();
    T::gemm(
        n, c, k, T::one(), &feat.data, c as isize, 1, &weight.data, 1, c as isize, T::one(), &mut out, k as isize, 1,
    );
    Tensor::from_vec(&[n, k], out)
}

/// Returns `(dfeat, dweight, dbias)`.
pub fn linear_backward<T: Scalar>(
    feat: &Tensor<T>,
    weight: &Tensor<T>,
    dlogits: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, c) = (feat.shape[0], feat.shape[1]);
    let k = weight.shape[0];
    let mut dfeat = Tensor::zeros(&[n, c]);
    T::gemm(
        n, k, c, T::one(), &dlogits.data, k as isize, 1, &weight.data, c as isize, 1, T::zero(), &mut dfeat.data,
        c as isize, 1,
    );
    let mut dw = Tensor::zeros(&[k, c]);
    T::gemm(
        k, n, c, T::one(), &dlogits.data, 1, k as isize, &feat.data, c as isize, 1, T::zero(), &mut dw.data,
        c as isize, 1,
    );
    let db = Tensor::from_vec(
        &[k],
        (0..k)
            .map(|j| (0..n).map(|i| dlogits.data[i * k + j]).fold(T::zero(), |a, b| a + b))
            .collect(),
    );
    (dfeat, dw, db)
}
