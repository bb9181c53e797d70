//! Shape-checked tensor operations. The graph records these; they are also
//! usable directly for inference.

use rand::Rng;

use super::kernels::{self, ConvDims};
use super::{Mode, Scalar, Tensor};
use crate::error::{Error, Result};

pub const BATCHNORM_EPS: f64 = 1e-5;
pub const BATCHNORM_MOMENTUM: f64 = 0.1;

/// Running statistics of one batch-normalization layer. Not trainable.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<T> {
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

impl<T: Scalar> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    /// Momentum update with the unbiased batch variance.
    fn update(&mut self, mean: &[T], biased_var: &[T], count: usize) {
        let m = T::lit(BATCHNORM_MOMENTUM);
        let keep = T::one() - m;
        let correction = T::lit(count as f64 / (count as f64 - 1.0));
        for c in 0..mean.len() {
            self.running_mean[c] = keep * self.running_mean[c] + m * mean[c];
            self.running_var[c] = keep * self.running_var[c] + m * biased_var[c] * correction;
        }
    }
}

pub(crate) fn conv_dims<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<ConvDims> {
    input.expect_shape("conv input", &[None, None, None])?;
    weight.expect_shape("conv weight", &[None, Some(input.shape()[1]), None])?;
    let (cout, k) = (weight.shape()[0], weight.shape()[2]);
    bias.expect_shape("conv bias", &[Some(cout)])?;
    let l = input.shape()[2];
    if l < k {
        return Err(Error::dim("conv input length (at least kernel size)", k, l));
    }
    Ok(ConvDims {
        batch: input.shape()[0],
        in_channels: input.shape()[1],
        out_channels: cout,
        length: l,
        kernel: k,
    })
}

/// Valid (unpadded) stride-1 convolution: `[B, Cin, L] -> [B, Cout, L - K + 1]`.
pub fn conv1d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let d = conv_dims(input, weight, bias)?;
    let out = kernels::conv1d_forward(input.data(), weight.data(), bias.data(), d);
    Tensor::new(&[d.batch, d.out_channels, d.out_length()], out)
}

/// `[B, C, L] -> [B, C, L / 2]` plus the flat input index chosen for every output.
pub fn maxpool1d_forward<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    input.expect_shape("pool input", &[None, None, None])?;
    let s = input.shape();
    if s[2] < 2 {
        return Err(Error::DegenerateInput(format!(
            "max pool needs length >= 2, got {}",
            s[2]
        )));
    }
    let (out, idx) = kernels::maxpool1d_forward(input.data(), s[0] * s[1], s[2]);
    Ok((Tensor::new(&[s[0], s[1], s[2] / 2], out)?, idx))
}

pub(crate) struct BatchNormOutput<T> {
    pub y: Tensor<T>,
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
}

pub(crate) fn batchnorm_impl<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    state: &mut BatchNormState<T>,
    mode: Mode,
) -> Result<BatchNormOutput<T>> {
    input.expect_shape("batchnorm input", &[None, None, None])?;
    let (b, c, l) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    gamma.expect_shape("batchnorm gamma", &[Some(c)])?;
    beta.expect_shape("batchnorm beta", &[Some(c)])?;
    if state.channels() != c {
        return Err(Error::dim("batchnorm running stats", c, state.channels()));
    }
    let eps = T::lit(BATCHNORM_EPS);
    let (y, xhat, inv_std) = match mode {
        Mode::Train => {
            if b * l < 2 {
                return Err(Error::DegenerateInput(
                    "batch normalization in train mode needs at least 2 values per channel".into(),
                ));
            }
            let (mean, var) = kernels::channel_moments(input.data(), b, c, l);
            let r = kernels::batchnorm_apply(
                input.data(),
                b,
                c,
                l,
                &mean,
                &var,
                gamma.data(),
                beta.data(),
                eps,
            );
            state.update(&mean, &var, b * l);
            r
        }
        Mode::Eval => kernels::batchnorm_apply(
            input.data(),
            b,
            c,
            l,
            &state.running_mean,
            &state.running_var,
            gamma.data(),
            beta.data(),
            eps,
        ),
    };
    Ok(BatchNormOutput {
        y: Tensor::new(input.shape(), y)?,
        xhat,
        inv_std,
    })
}

/// Batch normalization over `(B, L)` per channel. Train mode normalizes by
/// batch moments and updates `state`; eval mode uses the running statistics.
pub fn batchnorm1d_forward<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    state: &mut BatchNormState<T>,
    mode: Mode,
) -> Result<Tensor<T>> {
    batchnorm_impl(input, gamma, beta, state, mode).map(|o| o.y)
}

/// `input . weight^T + bias` for `input: [B, N]`, `weight: [M, N]`.
pub fn dense_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    input.expect_shape("dense input", &[None, None])?;
    let (b, n) = (input.shape()[0], input.shape()[1]);
    weight.expect_shape("dense weight", &[None, Some(n)])?;
    let m = weight.shape()[0];
    bias.expect_shape("dense bias", &[Some(m)])?;
    let out = kernels::dense_forward(input.data(), weight.data(), bias.data(), b, n, m);
    Tensor::new(&[b, m], out)
}

/// Elementwise `max(0, x)`. NaN passes through so corrupted inputs stay visible.
pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let data = input
        .data()
        .iter()
        .map(|&v| if v <= T::zero() { T::zero() } else { v })
        .collect();
    Tensor::new(input.shape(), data).expect("same shape")
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise `1 / (1 - rate)`.
pub fn dropout_mask<T: Scalar, R: Rng + ?Sized>(
    len: usize,
    rate: f64,
    rng: &mut R,
) -> Result<Vec<T>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Input(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    let scale = T::lit(1.0 / (1.0 - rate));
    // drop when a uniform u32 falls below rate * 2^32
    let threshold = (rate * 4_294_967_296.0) as u64;
    Ok((0..len)
        .map(|_| {
            if (rng.next_u32() as u64) < threshold {
                T::zero()
            } else {
                scale
            }
        })
        .collect())
}

/// Dropout. Eval mode and `rate == 0` are exact identities and draw no randomness.
pub fn dropout_forward<T: Scalar, R: Rng + ?Sized>(
    input: &Tensor<T>,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<Tensor<T>> {
    if mode == Mode::Eval || rate == 0.0 {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Input(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        return Ok(input.clone());
    }
    let mask = dropout_mask::<T, R>(input.len(), rate, rng)?;
    let data = input
        .data()
        .iter()
        .zip(&mask)
        .map(|(&v, &m)| v * m)
        .collect();
    Tensor::new(input.shape(), data)
}

pub(crate) fn check_labels(labels: &[usize], batch: usize, classes: usize) -> Result<()> {
    if labels.len() != batch {
        return Err(Error::dim("label count", batch, labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Label {
            label: bad,
            classes,
        });
    }
    Ok(())
}

/// Mean softmax cross-entropy over the batch, and the softmax probabilities.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(T, Tensor<T>)> {
    logits.expect_shape("logits", &[None, None])?;
    let (b, c) = (logits.shape()[0], logits.shape()[1]);
    check_labels(labels, b, c)?;
    let (loss, probs) = kernels::softmax_cross_entropy(logits.data(), labels, c);
    Ok((loss, Tensor::new(&[b, c], probs)?))
}

pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    logits.expect_shape("logits", &[None, None])?;
    let c = logits.shape()[1];
    Tensor::new(logits.shape(), kernels::softmax_rows(logits.data(), c))
}
