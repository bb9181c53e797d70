//! Slice-level forward and backward kernels.
//!
//! Every reduction runs in a fixed order so results are reproducible for a
//! given input. Parallel loops only split over independent outputs.

use rayon::prelude::*;

use super::Scalar;

/// Dot product with eight fixed lanes, combined pairwise at the end.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for j in 0..8 {
            acc[j] += x[j] * y[j];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (&x, &y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `out += alpha * x`
#[inline]
pub(crate) fn axpy<T: Scalar>(alpha: T, x: &[T], out: &mut [T]) {
    debug_assert_eq!(x.len(), out.len());
    for (o, &v) in out.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvDims {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub length: usize,
    pub kernel: usize,
}

impl ConvDims {
    pub fn out_length(&self) -> usize {
        self.length - self.kernel + 1
    }
}

const CO_TILE: usize = 4;
const T_TILE: usize = 32;

/// One sample of a valid stride-1 convolution: `x: [cin, l]`, `w: [cout, cin, k]`,
/// `out: [cout, l - k + 1]`. Every output starts from its bias and accumulates
/// input channels in order, kernel taps in order, which is the naive loop order.
fn conv1d_sample<T: Scalar>(
    x: &[T],
    w: &[T],
    bias: &[T],
    out: &mut [T],
    cin: usize,
    l: usize,
    k: usize,
) {
    let cout = bias.len();
    let lout = l - k + 1;
    let ck = cin * k;
    let mut co0 = 0;
    while co0 + CO_TILE <= cout {
        let mut t0 = 0;
        while t0 + T_TILE <= lout {
            let mut acc = [[T::zero(); T_TILE]; CO_TILE];
            for (r, a) in acc.iter_mut().enumerate() {
                *a = [bias[co0 + r]; T_TILE];
            }
            for ci in 0..cin {
                for kk in 0..k {
                    let xs: &[T; T_TILE] = x[ci * l + t0 + kk..ci * l + t0 + kk + T_TILE]
                        .try_into()
                        .unwrap();
                    for (r, a) in acc.iter_mut().enumerate() {
                        let wv = w[(co0 + r) * ck + ci * k + kk];
                        for j in 0..T_TILE {
                            a[j] += wv * xs[j];
                        }
                    }
                }
            }
            for (r, a) in acc.iter().enumerate() {
                out[(co0 + r) * lout + t0..(co0 + r) * lout + t0 + T_TILE].copy_from_slice(a);
            }
            t0 += T_TILE;
        }
        if t0 < lout {
            for r in 0..CO_TILE {
                conv1d_row_tail(x, w, bias, out, cin, l, k, co0 + r, t0);
            }
        }
        co0 += CO_TILE;
    }
    for co in co0..cout {
        conv1d_row_tail(x, w, bias, out, cin, l, k, co, 0);
    }
}

/// Outputs `t0..` of channel `co`, same accumulation order as the tiled path.
#[allow(clippy::too_many_arguments)]
fn conv1d_row_tail<T: Scalar>(
    x: &[T],
    w: &[T],
    bias: &[T],
    out: &mut [T],
    cin: usize,
    l: usize,
    k: usize,
    co: usize,
    t0: usize,
) {
    let lout = l - k + 1;
    let row = &mut out[co * lout + t0..(co + 1) * lout];
    row.fill(bias[co]);
    let n = row.len();
    for ci in 0..cin {
        for kk in 0..k {
            let wv = w[(co * cin + ci) * k + kk];
            axpy(wv, &x[ci * l + t0 + kk..ci * l + t0 + kk + n], row);
        }
    }
}

/// Valid, stride-1 convolution over a batch, `[B, Cin, L] -> [B, Cout, L - K + 1]`.
pub fn conv1d_forward<T: Scalar>(x: &[T], w: &[T], bias: &[T], d: ConvDims) -> Vec<T> {
    let lout = d.out_length();
    let (cin, k, l) = (d.in_channels, d.kernel, d.length);
    let mut out = vec![T::zero(); d.batch * d.out_channels * lout];
    out.par_chunks_mut(d.out_channels * lout)
        .zip(x.par_chunks(cin * l))
        .for_each(|(ob, xb)| conv1d_sample(xb, w, bias, ob, cin, l, k));
    out
}

const G_LANES: usize = 16;
const K_TILE: usize = 3;

fn lane_sum<T: Scalar>(a: &[T; G_LANES]) -> T {
    let mut v = *a;
    let mut width = G_LANES;
    while width > 1 {
        width /= 2;
        for j in 0..width {
            v[j] = v[j] + v[j + width];
        }
    }
    v[0]
}

/// Full `CO_TILE x K_TILE` block of weight gradients starting at `(co0, ci, k0)`.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn weight_grad_tile<T: Scalar>(
    xrow: &[T],
    g: &[T],
    dw: &mut [T],
    co0: usize,
    ci: usize,
    k0: usize,
    cin: usize,
    lout: usize,
    k: usize,
) {
    let full = lout / G_LANES * G_LANES;
    let mut acc = [[[T::zero(); G_LANES]; K_TILE]; CO_TILE];
    let mut t = 0;
    while t < full {
        let mut xs = [[T::zero(); G_LANES]; K_TILE];
        for (j, xv) in xs.iter_mut().enumerate() {
            *xv = xrow[t + k0 + j..t + k0 + j + G_LANES].try_into().unwrap();
        }
        for (r, ar) in acc.iter_mut().enumerate() {
            let gs: &[T; G_LANES] = g[(co0 + r) * lout + t..(co0 + r) * lout + t + G_LANES]
                .try_into()
                .unwrap();
            for (a, xv) in ar.iter_mut().zip(&xs) {
                for q in 0..G_LANES {
                    a[q] += gs[q] * xv[q];
                }
            }
        }
        t += G_LANES;
    }
    for (r, ar) in acc.iter().enumerate() {
        let grow = &g[(co0 + r) * lout..(co0 + r + 1) * lout];
        for (j, a) in ar.iter().enumerate() {
            let mut s = lane_sum(a);
            for tt in full..lout {
                s += grow[tt] * xrow[tt + k0 + j];
            }
            dw[((co0 + r) * cin + ci) * k + k0 + j] += s;
        }
    }
}

/// Single weight gradient, same lane layout as [`weight_grad_tile`].
fn weight_grad_one<T: Scalar>(xrow: &[T], grow: &[T], kk: usize) -> T {
    let lout = grow.len();
    let full = lout / G_LANES * G_LANES;
    let mut acc = [T::zero(); G_LANES];
    let mut t = 0;
    while t < full {
        for q in 0..G_LANES {
            acc[q] += grow[t + q] * xrow[t + kk + q];
        }
        t += G_LANES;
    }
    let mut s = lane_sum(&acc);
    for tt in full..lout {
        s += grow[tt] * xrow[tt + kk];
    }
    s
}

/// `dw[co, ci, kk] += sum_t g[co, t] * x[ci, t + kk]` for one sample.
fn conv1d_weight_grad_sample<T: Scalar>(
    x: &[T],
    g: &[T],
    dw: &mut [T],
    cin: usize,
    cout: usize,
    l: usize,
    k: usize,
) {
    let lout = l - k + 1;
    for ci in 0..cin {
        let xrow = &x[ci * l..(ci + 1) * l];
        let mut co0 = 0;
        while co0 + CO_TILE <= cout {
            let mut k0 = 0;
            while k0 + K_TILE <= k {
                weight_grad_tile(xrow, g, dw, co0, ci, k0, cin, lout, k);
                k0 += K_TILE;
            }
            for kk in k0..k {
                for co in co0..co0 + CO_TILE {
                    dw[(co * cin + ci) * k + kk] +=
                        weight_grad_one(xrow, &g[co * lout..(co + 1) * lout], kk);
                }
            }
            co0 += CO_TILE;
        }
        for co in co0..cout {
            for kk in 0..k {
                dw[(co * cin + ci) * k + kk] +=
                    weight_grad_one(xrow, &g[co * lout..(co + 1) * lout], kk);
            }
        }
    }
}

/// Gradients of [`conv1d_forward`]: `(dx, dw, dbias)`; `dx` only when requested.
///
/// The input gradient is itself a valid convolution of the zero-padded output
/// gradient with the flipped, channel-transposed kernel.
pub fn conv1d_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    dy: &[T],
    d: ConvDims,
    need_dx: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let lout = d.out_length();
    let (cin, cout, k, l) = (d.in_channels, d.out_channels, d.kernel, d.length);

    let mut dw = vec![T::zero(); w.len()];
    let mut db = vec![T::zero(); cout];
    for b in 0..d.batch {
        let g = &dy[b * cout * lout..(b + 1) * cout * lout];
        for (co, dbco) in db.iter_mut().enumerate() {
            *dbco += g[co * lout..(co + 1) * lout].iter().copied().sum::<T>();
        }
    }
    // split output channels across threads; each thread walks the batch in order
    let per_thread = CO_TILE * cout.div_ceil(CO_TILE * rayon::current_num_threads()).max(1);
    dw.par_chunks_mut(per_thread * cin * k)
        .enumerate()
        .for_each(|(chunk, dwc)| {
            let co_start = chunk * per_thread;
            let rows = dwc.len() / (cin * k);
            for b in 0..d.batch {
                let xb = &x[b * cin * l..(b + 1) * cin * l];
                let g = &dy[(b * cout + co_start) * lout..(b * cout + co_start + rows) * lout];
                conv1d_weight_grad_sample(xb, g, dwc, cin, rows, l, k);
            }
        });

    let dx = need_dx.then(|| {
        // wt[ci, co, j] = w[co, ci, k - 1 - j]
        let mut wt = vec![T::zero(); w.len()];
        for co in 0..cout {
            for ci in 0..cin {
                for j in 0..k {
                    wt[(ci * cout + co) * k + j] = w[(co * cin + ci) * k + (k - 1 - j)];
                }
            }
        }
        let zero_bias = vec![T::zero(); cin];
        let padded_len = lout + 2 * (k - 1);
        let mut dx = vec![T::zero(); x.len()];
        dx.par_chunks_mut(cin * l)
            .zip(dy.par_chunks(cout * lout))
            .for_each(|(dxb, dyb)| {
                let mut padded = vec![T::zero(); cout * padded_len];
                for co in 0..cout {
                    padded[co * padded_len + k - 1..co * padded_len + k - 1 + lout]
                        .copy_from_slice(&dyb[co * lout..(co + 1) * lout]);
                }
                conv1d_sample(&padded, &wt, &zero_bias, dxb, cout, padded_len, k);
            });
        dx
    });
    (dx, dw, db)
}

/// Kernel-2 stride-2 max pooling over the last axis of `[rows, length]`.
/// A trailing odd element is dropped; ties pick the earlier element.
pub fn maxpool1d_forward<T: Scalar>(x: &[T], rows: usize, length: usize) -> (Vec<T>, Vec<u32>) {
    let lout = length / 2;
    let mut out = vec![T::zero(); rows * lout];
    let mut argmax = vec![0u32; rows * lout];
    for r in 0..rows {
        let xs = &x[r * length..r * length + 2 * lout];
        let os = &mut out[r * lout..(r + 1) * lout];
        let is = &mut argmax[r * lout..(r + 1) * lout];
        let base = (r * length) as u32;
        for (t, ((pair, o), i)) in xs
            .chunks_exact(2)
            .zip(os.iter_mut())
            .zip(is.iter_mut())
            .enumerate()
        {
            let second = pair[1] > pair[0];
            *o = if second { pair[1] } else { pair[0] };
            *i = base + 2 * t as u32 + second as u32;
        }
    }
    (out, argmax)
}

pub fn maxpool1d_backward<T: Scalar>(dy: &[T], argmax: &[u32], input_len: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); input_len];
    for (&g, &i) in dy.iter().zip(argmax) {
        dx[i as usize] += g;
    }
    dx
}

/// Per-channel statistics over the `(batch, length)` axes of `[batch, channels, length]`.
/// Returns `(mean, biased variance)`.
pub fn channel_moments<T: Scalar>(
    x: &[T],
    batch: usize,
    channels: usize,
    length: usize,
) -> (Vec<T>, Vec<T>) {
    let n = T::lit((batch * length) as f64);
    let mut mean = vec![T::zero(); channels];
    let mut var = vec![T::zero(); channels];
    for c in 0..channels {
        let mut s = T::zero();
        for b in 0..batch {
            let row = &x[(b * channels + c) * length..(b * channels + c + 1) * length];
            s += row.iter().copied().sum::<T>();
        }
        let m = s / n;
        let mut ss = T::zero();
        for b in 0..batch {
            let row = &x[(b * channels + c) * length..(b * channels + c + 1) * length];
            ss += row.iter().map(|&v| (v - m) * (v - m)).sum::<T>();
        }
        mean[c] = m;
        var[c] = ss / n;
    }
    (mean, var)
}

/// Normalizes with the given per-channel statistics and applies `gamma * xhat + beta`.
/// Returns `(y, xhat, inv_std)`.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm_apply<T: Scalar>(
    x: &[T],
    batch: usize,
    channels: usize,
    length: usize,
    mean: &[T],
    var: &[T],
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    for b in 0..batch {
        for c in 0..channels {
            let r = (b * channels + c) * length..(b * channels + c + 1) * length;
            let (m, s, g, bt) = (mean[c], inv_std[c], gamma[c], beta[c]);
            for ((yo, ho), &v) in y[r.clone()].iter_mut().zip(&mut xhat[r.clone()]).zip(&x[r]) {
                let h = (v - m) * s;
                *ho = h;
                *yo = g * h + bt;
            }
        }
    }
    (y, xhat, inv_std)
}

/// Gradients of batch normalization. In train mode the batch statistics
/// depend on `x`; in eval mode they are constants.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm_backward<T: Scalar>(
    dy: &[T],
    xhat: &[T],
    inv_std: &[T],
    gamma: &[T],
    batch: usize,
    channels: usize,
    length: usize,
    train: bool,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = T::lit((batch * length) as f64);
    let mut dgamma = vec![T::zero(); channels];
    let mut dbeta = vec![T::zero(); channels];
    for c in 0..channels {
        for b in 0..batch {
            let r = (b * channels + c) * length..(b * channels + c + 1) * length;
            dbeta[c] += dy[r.clone()].iter().copied().sum::<T>();
            dgamma[c] += dot(&dy[r.clone()], &xhat[r]);
        }
    }
    let mut dx = vec![T::zero(); dy.len()];
    for c in 0..channels {
        let g = gamma[c];
        let s = inv_std[c];
        // sums of dxhat and dxhat * xhat are gamma times the beta/gamma grads
        let sum_dxhat = g * dbeta[c];
        let sum_dxhat_xhat = g * dgamma[c];
        for b in 0..batch {
            let r = (b * channels + c) * length..(b * channels + c + 1) * length;
            for ((o, &gy), &h) in dx[r.clone()].iter_mut().zip(&dy[r.clone()]).zip(&xhat[r]) {
                let dh = gy * g;
                *o = if train {
                    s / n * (n * dh - sum_dxhat - h * sum_dxhat_xhat)
                } else {
                    dh * s
                };
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// `out[b, m] = bias[m] + x[b, :] . w[m, :]`
pub fn dense_forward<T: Scalar>(
    x: &[T],
    w: &[T],
    bias: &[T],
    batch: usize,
    n: usize,
    m: usize,
) -> Vec<T> {
    debug_assert_eq!(x.len(), batch * n);
    let mut out = vec![T::zero(); batch * m];
    out.par_chunks_mut(m)
        .zip(x.par_chunks(n))
        .for_each(|(orow, xrow)| {
            for (j, o) in orow.iter_mut().enumerate() {
                *o = bias[j] + dot(xrow, &w[j * n..(j + 1) * n]);
            }
        });
    out
}

pub fn dense_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    dy: &[T],
    batch: usize,
    n: usize,
    m: usize,
    need_dx: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let mut dw = vec![T::zero(); m * n];
    let mut db = vec![T::zero(); m];
    dw.par_chunks_mut(n)
        .zip(db.par_iter_mut())
        .enumerate()
        .for_each(|(j, (dwrow, dbj))| {
            for b in 0..batch {
                let g = dy[b * m + j];
                *dbj += g;
                axpy(g, &x[b * n..(b + 1) * n], dwrow);
            }
        });
    let dx = need_dx.then(|| {
        let mut dx = vec![T::zero(); batch * n];
        dx.par_chunks_mut(n)
            .zip(dy.par_chunks(m))
            .for_each(|(dxrow, g)| {
                for (j, &gj) in g.iter().enumerate() {
                    axpy(gj, &w[j * n..(j + 1) * n], dxrow);
                }
            });
        dx
    });
    (dx, dw, db)
}

/// Row-wise max-subtracted softmax.
pub fn softmax_rows<T: Scalar>(logits: &[T], classes: usize) -> Vec<T> {
    let mut p = vec![T::zero(); logits.len()];
    for (prow, lrow) in p.chunks_mut(classes).zip(logits.chunks(classes)) {
        let mx = lrow.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for (o, &v) in prow.iter_mut().zip(lrow) {
            *o = (v - mx).exp();
            z += *o;
        }
        for o in prow.iter_mut() {
            *o /= z;
        }
    }
    p
}

/// Mean cross-entropy of softmax(logits) against integer labels, computed
/// through log-sum-exp. Returns `(loss, probabilities)`.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &[T],
    labels: &[usize],
    classes: usize,
) -> (T, Vec<T>) {
    let probs = softmax_rows(logits, classes);
    let mut total = T::zero();
    for (lrow, &y) in logits.chunks(classes).zip(labels) {
        let mx = lrow.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = mx + lrow.iter().map(|&v| (v - mx).exp()).sum::<T>().ln();
        total += lse - lrow[y];
    }
    (total / T::lit(labels.len() as f64), probs)
}
