//! Loop-nest reference kernels shared by the property tests and the acceptance suite.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use specmon_core::nn::{Scalar, Tensor};

pub fn random<T: Scalar>(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<T> {
    let n = shape.iter().product();
    Tensor::new(
        shape,
        (0..n).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect(),
    )
    .unwrap()
}

/// Five nested loops, bias first, then input channels, then taps.
pub fn naive_conv<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, bias: &Tensor<T>) -> Vec<T> {
    let (b, cin, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, k) = (w.shape()[0], w.shape()[2]);
    let lo = l - k + 1;
    let mut out = vec![T::zero(); b * cout * lo];
    for n in 0..b {
        for co in 0..cout {
            for t in 0..lo {
                let mut s = bias.data()[co];
                for ci in 0..cin {
                    for kk in 0..k {
                        s += x.data()[(n * cin + ci) * l + t + kk]
                            * w.data()[(co * cin + ci) * k + kk];
                    }
                }
                out[(n * cout + co) * lo + t] = s;
            }
        }
    }
    out
}

/// Maximum of each non-overlapping pair along the last axis; a trailing odd sample is dropped.
pub fn naive_maxpool<T: Scalar>(x: &Tensor<T>) -> Vec<T> {
    let (rows, l) = (x.shape()[0] * x.shape()[1], x.shape()[2]);
    let mut out = Vec::with_capacity(rows * (l / 2));
    for r in 0..rows {
        for t in 0..l / 2 {
            let (a, b) = (x.data()[r * l + 2 * t], x.data()[r * l + 2 * t + 1]);
            out.push(if b > a { b } else { a });
        }
    }
    out
}
