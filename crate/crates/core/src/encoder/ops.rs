//! Per-sample kernels for 1-D convolution, batch normalization + ReLU and
//! pooling. Feature maps are `[N, C, T]` buffers where channel `c` of sample
//! `s` starts at `s * sample_stride + c * t`.

use super::real::{gemm, Real, View};

pub(crate) const BN_EPS: f64 = 1e-5;
pub(crate) const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Lay {
    pub n: usize,
    pub sample_stride: usize,
    pub t: usize,
}

impl Lay {
    pub fn dense(n: usize, c: usize, t: usize) -> Self {
        Lay {
            n,
            sample_stride: c * t,
            t,
        }
    }

    #[inline]
    pub fn row(&self, s: usize, c: usize) -> usize {
        s * self.sample_stride + c * self.t
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn t_out(&self, t_in: usize) -> usize {
        (t_in + 2 * self.pad - self.k) / self.stride + 1
    }

    pub fn t_pad(&self, t_in: usize) -> usize {
        t_in + 2 * self.pad
    }
}

/// `out[o, t] = Σ_{i,kk} w[o, i, kk] · xp[i, t·stride + kk]` where `xp` is the
/// zero-padded input `[c_in, t_in + 2·pad]`. Output rows start at `out_off`
/// with row stride `out_rs`.
pub(crate) fn conv_forward<F: Real>(
    g: &ConvGeom,
    t_in: usize,
    w: &[F],
    xp: &[F],
    out: &mut [F],
    out_off: usize,
    out_rs: usize,
) {
    let t_out = g.t_out(t_in);
    let t_pad = g.t_pad(t_in);
    for kk in 0..g.k {
        gemm(
            g.c_out,
            g.c_in,
            t_out,
            F::one(),
            w,
            View::new(kk, g.c_in * g.k, g.k),
            xp,
            View::new(kk, t_pad, g.stride),
            if kk == 0 { F::zero() } else { F::one() },
            out,
            View::new(out_off, out_rs, 1),
        );
    }
}

/// Accumulates the weight gradient and, when `dxp` is given, the gradient
/// with respect to the padded input (which must be zeroed by the caller).
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<F: Real>(
    g: &ConvGeom,
    t_in: usize,
    w: &[F],
    xp: &[F],
    dy: &[F],
    dy_off: usize,
    dy_rs: usize,
    dw: &mut [F],
    dxp: Option<&mut [F]>,
) {
    let t_out = g.t_out(t_in);
    let t_pad = g.t_pad(t_in);
    for kk in 0..g.k {
        gemm(
            g.c_out,
            t_out,
            g.c_in,
            F::one(),
            dy,
            View::new(dy_off, dy_rs, 1),
            xp,
            View::new(kk, g.stride, t_pad),
            F::one(),
            dw,
            View::new(kk, g.c_in * g.k, g.k),
        );
    }
    if let Some(dxp) = dxp {
        for kk in 0..g.k {
            gemm(
                g.c_in,
                g.c_out,
                t_out,
                F::one(),
                w,
                View::new(kk, g.k, g.c_in * g.k),
                dy,
                View::new(dy_off, dy_rs, 1),
                F::one(),
                dxp,
                View::new(kk, t_pad, g.stride),
            );
        }
    }
}

/// Normalization statistics of one batch-norm layer for one forward pass.
#[derive(Clone, Debug)]
pub(crate) struct BnCache<F> {
    pub mean: Vec<F>,
    pub inv_std: Vec<F>,
    /// Biased batch variance (training mode only), for the running average.
    pub batch_var: Vec<f64>,
    pub count: usize,
}

/// Batch statistics over `(N, T)` for the first `c` channels.
pub(crate) fn bn_batch_cache<F: Real>(x: &[F], lay: Lay, c: usize) -> BnCache<F> {
    let count = lay.n * lay.t;
    let mut mean = vec![F::zero(); c];
    let mut inv_std = vec![F::zero(); c];
    let mut batch_var = vec![0.0; c];
    for ch in 0..c {
        let mut sum = 0.0f64;
        for s in 0..lay.n {
            let r = lay.row(s, ch);
            sum += x[r..r + lay.t].iter().map(|v| v.f64()).sum::<f64>();
        }
        let m = sum / count as f64;
        let mut sq = 0.0f64;
        for s in 0..lay.n {
            let r = lay.row(s, ch);
            sq += x[r..r + lay.t].iter().map(|v| (v.f64() - m).powi(2)).sum::<f64>();
        }
        let var = sq / count as f64;
        mean[ch] = F::of(m);
        inv_std[ch] = F::of(1.0 / (var + BN_EPS).sqrt());
        batch_var[ch] = var;
    }
    BnCache {
        mean,
        inv_std,
        batch_var,
        count,
    }
}

/// Statistics taken from the running buffers (inference mode).
pub(crate) fn bn_running_cache<F: Real>(running_mean: &[F], running_var: &[F]) -> BnCache<F> {
    BnCache {
        mean: running_mean.to_vec(),
        inv_std: running_var
            .iter()
            .map(|v| F::of(1.0 / (v.f64() + BN_EPS).sqrt()))
            .collect(),
        batch_var: Vec::new(),
        count: 0,
    }
}

/// Exponential running-average update with the unbiased batch variance.
pub(crate) fn bn_commit<F: Real>(cache: &BnCache<F>, running_mean: &mut [F], running_var: &mut [F]) {
    let unbias = if cache.count > 1 {
        cache.count as f64 / (cache.count - 1) as f64
    } else {
        1.0
    };
    for ch in 0..running_mean.len() {
        let rm = running_mean[ch].f64();
        let rv = running_var[ch].f64();
        running_mean[ch] = F::of((1.0 - BN_MOMENTUM) * rm + BN_MOMENTUM * cache.mean[ch].f64());
        running_var[ch] = F::of((1.0 - BN_MOMENTUM) * rv + BN_MOMENTUM * cache.batch_var[ch] * unbias);
    }
}

/// Writes `relu(γ·(x − μ)·σ⁻¹ + β)` for `c` channels of sample `s` into
/// `out[out_off + ch * out_rs + t]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn bn_relu_sample<F: Real>(
    x: &[F],
    lay: Lay,
    s: usize,
    c: usize,
    cache: &BnCache<F>,
    gamma: &[F],
    beta: &[F],
    out: &mut [F],
    out_off: usize,
    out_rs: usize,
) {
    for ch in 0..c {
        let r = lay.row(s, ch);
        let scale = gamma[ch] * cache.inv_std[ch];
        let shift = beta[ch] - cache.mean[ch] * scale;
        let dst = &mut out[out_off + ch * out_rs..out_off + ch * out_rs + lay.t];
        for (o, &v) in dst.iter_mut().zip(&x[r..r + lay.t]) {
            let a = v * scale + shift;
            *o = if a > F::zero() { a } else { F::zero() };
        }
    }
}

/// Backward of batch-norm (training statistics) followed by ReLU.
///
/// `d_r` holds the gradient with respect to the ReLU output as a dense
/// `[N, c, T]` buffer; the input gradient is added into `dx`, which shares
/// `x`'s layout.
#[allow(clippy::too_many_arguments)]
pub(crate) fn bn_relu_backward<F: Real>(
    x: &[F],
    lay: Lay,
    c: usize,
    cache: &BnCache<F>,
    gamma: &[F],
    beta: &[F],
    d_r: &[F],
    dgamma: &mut [F],
    dbeta: &mut [F],
    dx: &mut [F],
) {
    let dl = Lay::dense(lay.n, c, lay.t);
    let m = (lay.n * lay.t) as f64;
    for ch in 0..c {
        let mu = cache.mean[ch];
        let inv = cache.inv_std[ch];
        let g = gamma[ch];
        let b = beta[ch];
        let mut sum_g = 0.0f64;
        let mut sum_gx = 0.0f64;
        for s in 0..lay.n {
            let xr = lay.row(s, ch);
            let dr = dl.row(s, ch);
            for t in 0..lay.t {
                let xhat = (x[xr + t] - mu) * inv;
                if g * xhat + b > F::zero() {
                    let gv = d_r[dr + t].f64();
                    sum_g += gv;
                    sum_gx += gv * xhat.f64();
                }
            }
        }
        dgamma[ch] += F::of(sum_gx);
        dbeta[ch] += F::of(sum_g);
        let mean_g = F::of(sum_g / m);
        let mean_gx = F::of(sum_gx / m);
        let k = g * inv;
        for s in 0..lay.n {
            let xr = lay.row(s, ch);
            let dr = dl.row(s, ch);
            for t in 0..lay.t {
                let xhat = (x[xr + t] - mu) * inv;
                let gv = if g * xhat + b > F::zero() {
                    d_r[dr + t]
                } else {
                    F::zero()
                };
                dx[xr + t] += k * (gv - mean_g - xhat * mean_gx);
            }
        }
    }
}

/// Max-pool, kernel 3, stride 2, padding 1, over rows of length `t_in`.
/// Returns the arg-max input position for every output element.
pub(crate) fn maxpool3_forward<F: Real>(row: &[F], out: &mut [F], idx: &mut [u32]) {
    let t_in = row.len();
    for (j, (o, ix)) in out.iter_mut().zip(idx.iter_mut()).enumerate() {
        let centre = 2 * j;
        let lo = centre.saturating_sub(1);
        let hi = (centre + 1).min(t_in - 1);
        let mut best = lo;
        for p in lo + 1..=hi {
            if row[p] > row[best] {
                best = p;
            }
        }
        *o = row[best];
        *ix = best as u32;
    }
}

pub(crate) fn maxpool3_len(t_in: usize) -> usize {
    (t_in + 2 - 3) / 2 + 1
}

/// Average-pool, kernel 2, stride 2.
pub(crate) fn avgpool2_forward<F: Real>(row: &[F], out: &mut [F]) {
    let half = F::of(0.5);
    for (j, o) in out.iter_mut().enumerate() {
        *o = (row[2 * j] + row[2 * j + 1]) * half;
    }
}
