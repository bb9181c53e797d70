//! Reverse-mode gradients against central finite differences in f64.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specmon_core::nn::{BatchNormState, Graph, Mode, Tensor, Var};

#[path = "support/gradcheck.rs"]
mod gradcheck;

use gradcheck::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn conv1d_gradients(b in 1usize..3, cin in 1usize..4, cout in 1usize..4, k in 1usize..4, extra in 0usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let leaves = [random(&[b, cin, k + extra], &mut rng), random(&[cout, cin, k], &mut rng), random(&[cout], &mut rng)];
        let net = smooth(|g: &mut Graph<f64>, v: &[Var]| {
            let y = g.conv1d(v[0], v[1], v[2])?;
            probe(g, y, seed)
        });
        prop_assert!(max_error(&*net, &leaves) < TOLERANCE);
    }

    #[test]
    fn dense_gradients(b in 1usize..4, n in 1usize..6, m in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let leaves = [random(&[b, n], &mut rng), random(&[m, n], &mut rng), random(&[m], &mut rng)];
        let net = smooth(|g: &mut Graph<f64>, v: &[Var]| {
            let y = g.dense(v[0], v[1], v[2])?;
            probe(g, y, seed)
        });
        prop_assert!(max_error(&*net, &leaves) < TOLERANCE);
    }

    // With two elements per channel the normalized output is ±1 whatever the
    // input, so the input gradient is an eps-sized remainder.
    #[test]
    fn batchnorm_train_gradients(b in 1usize..4, c in 1usize..4, l in 4usize..9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let leaves = [random(&[b, c, l], &mut rng), random(&[c], &mut rng), random(&[c], &mut rng)];
        let net = smooth(|g: &mut Graph<f64>, v: &[Var]| {
            let mut state = BatchNormState::new(c);
            let y = g.batchnorm1d(v[0], v[1], v[2], &mut state, Mode::Train)?;
            probe(g, y, seed)
        });
        prop_assert!(max_error(&*net, &leaves) < TOLERANCE);
    }

    #[test]
    fn batchnorm_eval_gradients(c in 1usize..4, l in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let leaves = [random(&[2, c, l], &mut rng), random(&[c], &mut rng), random(&[c], &mut rng)];
        let net = smooth(|g: &mut Graph<f64>, v: &[Var]| {
            let mut state = BatchNormState::new(c);
            state.running_mean.iter_mut().for_each(|m| *m = 0.3);
            state.running_var.iter_mut().for_each(|s| *s = 2.0);
            let y = g.batchnorm1d(v[0], v[1], v[2], &mut state, Mode::Eval)?;
            probe(g, y, seed)
        });
        prop_assert!(max_error(&*net, &leaves) < TOLERANCE);
    }

    #[test]
    fn relu_gradients(n in 1usize..20, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let leaves = [spaced(&[n], 0.05, &mut rng)];
        let net = smooth(|g: &mut Graph<f64>, v: &[Var]| {
            let y = g.relu(v[0]);
            probe(g, y, seed)
        });
        prop_assert!(max_error(&*net, &leaves) < TOLERANCE);
    }

    #[test]
    fn maxpool_gradients(b in 1usize..3, c in 1usize..3, l in 2usize..9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let leaves = [spaced(&[b, c, l], 0.05, &mut rng)];
        let net = smooth(|g: &mut Graph<f64>, v: &[Var]| {
            let y = g.maxpool1d(v[0])?;
            probe(g, y, seed)
        });
        prop_assert!(max_error(&*net, &leaves) < TOLERANCE);
    }

    #[test]
    fn dropout_gradients(n in 1usize..30, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let leaves = [random(&[n], &mut rng)];
        let net = smooth(|g: &mut Graph<f64>, v: &[Var]| {
            // same mask on every evaluation
            let mut mask_rng = ChaCha8Rng::seed_from_u64(seed);
            let y = g.dropout(v[0], 0.5, Mode::Train, &mut mask_rng)?;
            probe(g, y, seed)
        });
        prop_assert!(max_error(&*net, &leaves) < TOLERANCE);
    }

    #[test]
    fn cross_entropy_gradient_is_p_minus_onehot(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (b, c) = (4, 12);
        let logits = random(&[b, c], &mut rng).data().iter().map(|v| v * 4.0).collect::<Vec<_>>();
        let logits = Tensor::new(&[b, c], logits).unwrap();
        let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..c)).collect();
        let net = smooth(|g: &mut Graph<f64>, v: &[Var]| Ok(g.softmax_cross_entropy(v[0], &labels)?.0));
        let leaves = [logits];
        prop_assert!(max_error(&*net, &leaves) < TOLERANCE);

        let mut g = Graph::new();
        let x = g.leaf(leaves[0].clone().with_requires_grad(true));
        let (loss, probs) = g.softmax_cross_entropy(x, &labels).unwrap();
        prop_assert!(g.value(loss).data()[0] >= 0.0);
        g.backward(loss).unwrap();
        let grad = g.take_grad(x).unwrap();
        for i in 0..b {
            for j in 0..c {
                let onehot = if labels[i] == j { 1.0 } else { 0.0 };
                let expected = (probs.data()[i * c + j] - onehot) / b as f64;
                prop_assert!((grad[i * c + j] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn small_network_gradients(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let leaves = [
            random(&[2, 2, 40], &mut rng),
            random(&[3, 2, 3], &mut rng),
            random(&[3], &mut rng),
            random(&[3], &mut rng),
            random(&[3], &mut rng),
            random(&[4, 57], &mut rng),
            random(&[4], &mut rng),
        ];
        let labels = [1usize, 3];
        let net: Box<Net> = Box::new(|g: &mut Graph<f64>, v: &[Var]| {
            let mut state = BatchNormState::new(3);
            let x = g.conv1d(v[0], v[1], v[2])?;
            let x = g.batchnorm1d(x, v[3], v[4], &mut state, Mode::Train)?;
            let pre = g.value(x).data();
            let pattern = signs(pre).chain(winners(pre)).collect();
            let x = g.relu(x);
            let x = g.maxpool1d(x)?;
            let x = g.reshape(x, &[2, 57])?;
            let x = g.dense(x, v[5], v[6])?;
            Ok((g.softmax_cross_entropy(x, &labels)?.0, pattern))
        });
        let err = checked_error(&*net, &leaves);
        prop_assume!(err.is_some());
        prop_assert!(err.unwrap() < TOLERANCE);
    }

    #[test]
    fn maxpool_backward_conserves_gradient(b in 1usize..3, c in 1usize..3, l in 2usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::new();
        let x = g.leaf(random(&[b, c, l], &mut rng).with_requires_grad(true));
        let y = g.maxpool1d(x).unwrap();
        let root = probe(&mut g, y, seed).unwrap();
        g.backward(root).unwrap();
        let routed = g.take_grad(x).unwrap();
        let lout = l / 2;
        // the probe weights are the gradient arriving at the pooled output
        let upstream = random(&[1, b * c * lout], &mut probe_rng(seed)).into_data();
        for row in 0..b * c {
            for t in 0..lout {
                let pair = &routed[row * l + 2 * t..row * l + 2 * t + 2];
                // one slot carries the whole gradient, the other none
                prop_assert!(pair.contains(&0.0));
                prop_assert_eq!(pair[0] + pair[1], upstream[row * lout + t]);
            }
            if l % 2 == 1 {
                prop_assert_eq!(routed[row * l + l - 1], 0.0);
            }
        }
        let total: f64 = routed.iter().sum();
        let expected: f64 = upstream.iter().sum();
        prop_assert!((total - expected).abs() < 1e-12);
    }
}

#[test]
fn full_network_gradients_match_finite_differences() {
    let check = full_network_check();
    assert!(
        check.loss_gap < 1e-10,
        "reference loss off by {}",
        check.loss_gap
    );
    assert!(
        check.worst < TOLERANCE,
        "worst relative error {}",
        check.worst
    );
    eprintln!("full network: worst relative error {:.3e}", check.worst);
}
