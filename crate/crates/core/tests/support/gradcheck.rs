//! Finite-difference gradient oracle shared by the gradient tests and the acceptance suite.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specmon_core::classifier::{build_model, TaskKind};
use specmon_core::nn::{BatchNormState, Graph, Mode, Tensor, Var};
use specmon_core::Result;

/// Step for the per-layer and small-network properties.
pub const STEP: f64 = 1e-4;
/// Step for the full network check.
pub const FULL_STEP: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely against it.
pub const FLOOR: f64 = 1e-5;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FLOOR)
}

pub fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Scalar loss built from leaf tensors, plus a fingerprint of every
/// piecewise choice (ReLU sign, pooling winner) made on the way.
pub type Net<'a> = dyn Fn(&mut Graph<f64>, &[Var]) -> Result<(Var, Vec<u8>)> + 'a;

pub fn smooth<'a>(f: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var> + 'a) -> Box<Net<'a>> {
    Box::new(move |g: &mut Graph<f64>, v: &[Var]| Ok((f(g, v)?, Vec::new())))
}

pub fn value_and_grads(net: &Net, leaves: &[Tensor<f64>]) -> (Vec<u8>, Vec<Vec<f64>>) {
    let mut g = Graph::new();
    let vars: Vec<Var> = leaves
        .iter()
        .map(|t| g.leaf(t.clone().with_requires_grad(true)))
        .collect();
    let (root, pattern) = net(&mut g, &vars).unwrap();
    g.backward(root).unwrap();
    let grads = vars
        .iter()
        .zip(leaves)
        .map(|(v, t)| g.take_grad(*v).unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();
    (pattern, grads)
}

pub fn value(net: &Net, leaves: &[Tensor<f64>]) -> (f64, Vec<u8>) {
    let mut g = Graph::new();
    let vars: Vec<Var> = leaves.iter().map(|t| g.leaf(t.clone())).collect();
    let (root, pattern) = net(&mut g, &vars).unwrap();
    (g.value(root).data()[0], pattern)
}

/// Largest relative error over every entry of every leaf, or `None` when a
/// perturbation crosses a kink and the difference quotient is meaningless.
pub fn checked_error(net: &Net, leaves: &[Tensor<f64>]) -> Option<f64> {
    let (base, grads) = value_and_grads(net, leaves);
    let mut worst: f64 = 0.0;
    for (i, t) in leaves.iter().enumerate() {
        for j in 0..t.len() {
            let mut plus = leaves.to_vec();
            plus[i].data_mut()[j] += STEP;
            let mut minus = leaves.to_vec();
            minus[i].data_mut()[j] -= STEP;
            let (up, up_pattern) = value(net, &plus);
            let (down, down_pattern) = value(net, &minus);
            if up_pattern != base || down_pattern != base {
                return None;
            }
            worst = worst.max(rel_err(grads[i][j], (up - down) / (2.0 * STEP)));
        }
    }
    Some(worst)
}

pub fn max_error(net: &Net, leaves: &[Tensor<f64>]) -> f64 {
    checked_error(net, leaves).expect("smooth nets have no kinks")
}

pub fn signs(v: &[f64]) -> impl Iterator<Item = u8> + '_ {
    v.iter().map(|&a| u8::from(a > 0.0))
}

/// Winner of each pooling pair after ReLU; 2 when both are clipped to zero.
pub fn winners(v: &[f64]) -> impl Iterator<Item = u8> + '_ {
    v.chunks(2).map(|p| {
        if p[0].max(p[1]) > 0.0 {
            u8::from(p[1] > p[0])
        } else {
            2
        }
    })
}

/// Separate stream from the one that drew the inputs: weights equal to the
/// input would make the batch-norm input gradient cancel.
pub fn probe_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15)
}

/// Reduces any tensor to a scalar through fixed random weights, so upstream
/// gradients are not all equal.
pub fn probe(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    let n = g.value(y).len();
    let mut rng = probe_rng(seed);
    let flat = g.reshape(y, &[1, n])?;
    let w = g.leaf(random(&[1, n], &mut rng));
    let b = g.leaf(Tensor::zeros(&[1]));
    let out = g.dense(flat, w, b)?;
    Ok(g.sum(out))
}

/// Values spaced at least `gap` apart in random order, so no max or ReLU kink
/// lies within one finite-difference step.
pub fn spaced(shape: &[usize], gap: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n)
        .map(|i| (i as f64 - n as f64 / 2.0 + 0.25) * gap)
        .collect();
    for i in (1..n).rev() {
        v.swap(i, rng.gen_range(0..=i));
    }
    Tensor::new(shape, v).unwrap()
}

pub fn stage<'a>(g: &'a Graph<f64>, trace: &[(String, Var)], name: &str) -> &'a [f64] {
    g.value(trace.iter().find(|(n, _)| n == name).unwrap().1)
        .data()
}

/// Piecewise choices of the full network frozen at one point, and its dropout masks.
pub struct Frozen {
    pub relu: Vec<Vec<bool>>,
    pub pool: Vec<Vec<u8>>,
    pub hidden: Vec<bool>,
    pub dropout: Vec<Vec<f64>>,
}

/// Naive f64 forward of the whole network with every ReLU, pooling and
/// dropout decision taken from `frozen`. It agrees with the network wherever
/// those decisions hold and is smooth everywhere.
pub fn reference_loss(
    params: &[Tensor<f64>],
    input: &Tensor<f64>,
    labels: &[usize],
    frozen: &Frozen,
) -> f64 {
    let b = input.shape()[0];
    let mut x = input.data().to_vec();
    let (mut cin, mut l) = (4, 1024);
    for blk in 0..3 {
        let (w, bias, gamma, beta) = (
            &params[4 * blk],
            &params[4 * blk + 1],
            &params[4 * blk + 2],
            &params[4 * blk + 3],
        );
        let (cout, k) = (w.shape()[0], w.shape()[2]);
        let lo = l - k + 1;
        let mut y = vec![0.0; b * cout * lo];
        for n in 0..b {
            for co in 0..cout {
                for t in 0..lo {
                    let mut s = bias.data()[co];
                    for ci in 0..cin {
                        for kk in 0..k {
                            s +=
                                x[(n * cin + ci) * l + t + kk] * w.data()[(co * cin + ci) * k + kk];
                        }
                    }
                    y[(n * cout + co) * lo + t] = s;
                }
            }
        }
        let count = (b * lo) as f64;
        for co in 0..cout {
            let idx = |n: usize, t: usize| (n * cout + co) * lo + t;
            let mean = (0..b)
                .flat_map(|n| (0..lo).map(move |t| (n, t)))
                .map(|(n, t)| y[idx(n, t)])
                .sum::<f64>()
                / count;
            let var = (0..b)
                .flat_map(|n| (0..lo).map(move |t| (n, t)))
                .map(|(n, t)| (y[idx(n, t)] - mean).powi(2))
                .sum::<f64>()
                / count;
            let inv = 1.0 / (var + 1e-5).sqrt();
            for n in 0..b {
                for t in 0..lo {
                    let i = idx(n, t);
                    y[i] = gamma.data()[co] * (y[i] - mean) * inv + beta.data()[co];
                }
            }
        }
        for (v, &on) in y.iter_mut().zip(&frozen.relu[blk]) {
            if !on {
                *v = 0.0;
            }
        }
        let half = lo / 2;
        let mut pooled = vec![0.0; b * cout * half];
        for row in 0..b * cout {
            for t in 0..half {
                let i = row * half + t;
                let pick = if frozen.pool[blk][i] == 1 { 1 } else { 0 };
                pooled[i] = y[row * lo + 2 * t + pick] * frozen.dropout[blk][i];
            }
        }
        x = pooled;
        cin = cout;
        l = half;
    }
    let dense = |x: &[f64], w: &Tensor<f64>, bias: &Tensor<f64>| {
        let (m, n) = (w.shape()[0], w.shape()[1]);
        let mut out = vec![0.0; b * m];
        for r in 0..b {
            for o in 0..m {
                let mut s = bias.data()[o];
                for i in 0..n {
                    s += x[r * n + i] * w.data()[o * n + i];
                }
                out[r * m + o] = s;
            }
        }
        out
    };
    let mut h = dense(&x, &params[12], &params[13]);
    for (i, v) in h.iter_mut().enumerate() {
        *v = if frozen.hidden[i] {
            *v * frozen.dropout[3][i]
        } else {
            0.0
        };
    }
    let logits = dense(&h, &params[14], &params[15]);
    let c = params[15].len();
    let mut loss = 0.0;
    for r in 0..b {
        let row = &logits[r * c..(r + 1) * c];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[labels[r]];
    }
    loss / b as f64
}

/// Outcome of comparing the composed network's gradients with central differences.
pub struct FullCheck {
    /// Gap between the network loss and the naive reference loss.
    pub loss_gap: f64,
    /// Largest relative error over the sampled parameter entries.
    pub worst: f64,
}

/// Batch of 2 through the 3-class network in f64, with three sampled entries
/// per parameter tensor differenced through [`reference_loss`].
pub fn full_network_check() -> FullCheck {
    let mut model = build_model::<f64>(TaskKind::Protocol, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let input = random(&[2, 4, 1024], &mut rng);
    let labels = [0usize, 2];
    const MASK_SEED: u64 = 3;

    let mut g = Graph::new();
    let mut mask_rng = ChaCha8Rng::seed_from_u64(MASK_SEED);
    let pass = model
        .record_forward(&mut g, input.clone(), Mode::Train, true, &mut mask_rng)
        .unwrap();
    let mut relu = Vec::new();
    let mut pool = Vec::new();
    let mut dropout_lens = Vec::new();
    for blk in 1..=3 {
        let pre = stage(&g, &pass.trace, &format!("block{blk}.bn"));
        relu.push(pre.iter().map(|&v| v > 0.0).collect());
        pool.push(winners(pre).collect());
        dropout_lens.push(stage(&g, &pass.trace, &format!("block{blk}.pool")).len());
    }
    let hidden = stage(&g, &pass.trace, "hidden.pre")
        .iter()
        .map(|&v| v > 0.0)
        .collect();
    dropout_lens.push(stage(&g, &pass.trace, "hidden").len());
    // replay the dropout draws in the order the forward pass made them
    let mut replay = ChaCha8Rng::seed_from_u64(MASK_SEED);
    let dropout = dropout_lens
        .iter()
        .zip([0.5, 0.5, 0.5, 0.3])
        .map(|(&n, rate)| {
            specmon_core::nn::ops::dropout_mask::<f64, _>(n, rate, &mut replay).unwrap()
        })
        .collect();
    let frozen = Frozen {
        relu,
        pool,
        hidden,
        dropout,
    };

    let (loss, _) = g.softmax_cross_entropy(pass.logits, &labels).unwrap();
    let network_loss = g.value(loss).data()[0];
    let reference = reference_loss(model.parameters(), &input, &labels, &frozen);
    g.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = pass
        .params
        .iter()
        .map(|v| g.take_grad(*v).unwrap())
        .collect();

    let mut params = model.parameters().to_vec();
    let mut pick = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for p in 0..params.len() {
        for _ in 0..3 {
            let j = pick.gen_range(0..params[p].len());
            let orig = params[p].data()[j];
            params[p].data_mut()[j] = orig + FULL_STEP;
            let up = reference_loss(&params, &input, &labels, &frozen);
            params[p].data_mut()[j] = orig - FULL_STEP;
            let down = reference_loss(&params, &input, &labels, &frozen);
            params[p].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * FULL_STEP);
            let err = rel_err(analytic[p][j], numeric);
            worst = worst.max(err);
        }
    }
    FullCheck {
        loss_gap: (network_loss - reference).abs(),
        worst,
    }
}

/// Worst relative error per layer type on one fixed-size random instance.
pub fn layer_checks(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let leaves = [
        random(&[2, 3, 12], &mut rng),
        random(&[4, 3, 5], &mut rng),
        random(&[4], &mut rng),
    ];
    let net = smooth(|g: &mut Graph<f64>, v: &[Var]| {
        let y = g.conv1d(v[0], v[1], v[2])?;
        probe(g, y, seed)
    });
    out.push(("conv1d", max_error(&*net, &leaves)));

    let leaves = [
        random(&[2, 3, 8], &mut rng),
        random(&[3], &mut rng),
        random(&[3], &mut rng),
    ];
    let net = smooth(|g: &mut Graph<f64>, v: &[Var]| {
        let mut state = BatchNormState::new(3);
        let y = g.batchnorm1d(v[0], v[1], v[2], &mut state, Mode::Train)?;
        probe(g, y, seed)
    });
    out.push(("batchnorm1d (train)", max_error(&*net, &leaves)));

    let net = smooth(|g: &mut Graph<f64>, v: &[Var]| {
        let mut state = BatchNormState::new(3);
        state.running_mean.iter_mut().for_each(|m| *m = 0.3);
        state.running_var.iter_mut().for_each(|s| *s = 2.0);
        let y = g.batchnorm1d(v[0], v[1], v[2], &mut state, Mode::Eval)?;
        probe(g, y, seed)
    });
    out.push(("batchnorm1d (eval)", max_error(&*net, &leaves)));

    let leaves = [spaced(&[2, 3, 10], 0.05, &mut rng)];
    let net = smooth(|g: &mut Graph<f64>, v: &[Var]| {
        let y = g.relu(v[0]);
        probe(g, y, seed)
    });
    out.push(("relu", max_error(&*net, &leaves)));

    let net = smooth(|g: &mut Graph<f64>, v: &[Var]| {
        let y = g.maxpool1d(v[0])?;
        probe(g, y, seed)
    });
    out.push(("maxpool1d", max_error(&*net, &leaves)));

    let leaves = [random(&[2, 30], &mut rng)];
    let net = smooth(|g: &mut Graph<f64>, v: &[Var]| {
        let mut mask_rng = ChaCha8Rng::seed_from_u64(seed);
        let y = g.dropout(v[0], 0.5, Mode::Train, &mut mask_rng)?;
        probe(g, y, seed)
    });
    out.push(("dropout", max_error(&*net, &leaves)));

    let leaves = [
        random(&[3, 7], &mut rng),
        random(&[5, 7], &mut rng),
        random(&[5], &mut rng),
    ];
    let net = smooth(|g: &mut Graph<f64>, v: &[Var]| {
        let y = g.dense(v[0], v[1], v[2])?;
        probe(g, y, seed)
    });
    out.push(("dense", max_error(&*net, &leaves)));

    let logits = Tensor::new(
        &[4, 12],
        random(&[4, 12], &mut rng)
            .data()
            .iter()
            .map(|v| v * 4.0)
            .collect(),
    )
    .unwrap();
    let labels: Vec<usize> = (0..4).map(|_| rng.gen_range(0..12)).collect();
    let net = smooth(|g: &mut Graph<f64>, v: &[Var]| Ok(g.softmax_cross_entropy(v[0], &labels)?.0));
    out.push(("softmax cross-entropy", max_error(&*net, &[logits])));
    out
}
