use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::task::TaskKind;
use super::train::TrainConfig;
use crate::datasets::SplitSpec;
use crate::error::{Error, Result};
use crate::features::{NormalizePolicy, CHANNELS, WINDOW_LEN};
use crate::nn::kernels::channel_moments;
use crate::nn::{
    batchnorm1d_forward, conv1d_forward, maxpool1d_forward, relu, BatchNormState, Graph, Mode,
    Scalar, Tensor, Var,
};
use crate::seed::derive_seed;

pub const CONV_CHANNELS: [usize; 3] = [64, 32, 16];
pub const KERNEL_SIZE: usize = 9;
pub const HIDDEN_UNITS: usize = 256;
pub const CONV_DROPOUT: f64 = 0.5;
pub const HIDDEN_DROPOUT: f64 = 0.3;

/// Sequence lengths through the three conv blocks for a given input length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub input_channels: usize,
    pub input_length: usize,
    pub conv_channels: [usize; 3],
    pub kernel_size: usize,
    /// Length after each convolution.
    pub conv_lengths: [usize; 3],
    /// Length after each pooling stage.
    pub pool_lengths: [usize; 3],
    pub flatten_width: usize,
    pub hidden_units: usize,
}

impl Geometry {
    pub fn for_input_length(input_length: usize) -> Result<Self> {
        let mut len = input_length;
        let mut conv_lengths = [0; 3];
        let mut pool_lengths = [0; 3];
        for i in 0..3 {
            if len < KERNEL_SIZE {
                return Err(Error::dim(
                    format!("input to conv block {}", i + 1),
                    KERNEL_SIZE,
                    len,
                ));
            }
            len = len - KERNEL_SIZE + 1;
            conv_lengths[i] = len;
            if len < 2 {
                return Err(Error::DegenerateInput(format!(
                    "pool {} input length {len}",
                    i + 1
                )));
            }
            len /= 2;
            pool_lengths[i] = len;
        }
        Ok(Self {
            input_channels: CHANNELS,
            input_length,
            conv_channels: CONV_CHANNELS,
            kernel_size: KERNEL_SIZE,
            conv_lengths,
            pool_lengths,
            flatten_width: CONV_CHANNELS[2] * len,
            hidden_units: HIDDEN_UNITS,
        })
    }

    /// Geometry for the fixed 4 x 1024 input.
    pub fn standard() -> Self {
        let g = Self::for_input_length(WINDOW_LEN).expect("1024 is a valid input length");
        assert_eq!(g.conv_lengths, [1016, 500, 242]);
        assert_eq!(g.pool_lengths, [508, 250, 121]);
        assert_eq!(g.flatten_width, 1936);
        g
    }
}

/// Trainable parameters in declared order: per conv block weight, bias,
/// gamma, beta; then hidden weight, bias; then output weight, bias.
pub fn parameter_names() -> Vec<String> {
    let mut names = Vec::with_capacity(14);
    for b in 1..=3 {
        for p in ["conv.weight", "conv.bias", "bn.gamma", "bn.beta"] {
            names.push(format!("block{b}.{p}"));
        }
    }
    for p in [
        "hidden.weight",
        "hidden.bias",
        "output.weight",
        "output.bias",
    ] {
        names.push(p.to_string());
    }
    names
}

/// The 4-channel 1D CNN: three conv/bn/relu/pool/dropout blocks, a 256-unit
/// hidden layer with dropout, and a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel<T: Scalar = f32> {
    pub(crate) task: TaskKind,
    pub(crate) class_map: Vec<String>,
    pub(crate) seed: u64,
    pub(crate) geometry: Geometry,
    pub(crate) params: Vec<Tensor<T>>,
    pub(crate) batchnorm: Vec<BatchNormState<T>>,
    pub(crate) normalization: NormalizePolicy,
    pub(crate) train_config: Option<TrainConfig>,
    pub(crate) split: Option<SplitSpec>,
}

/// Vars recorded by one forward pass.
pub struct ForwardPass {
    pub logits: Var,
    pub embedding: Var,
    pub params: Vec<Var>,
    /// Output of every stage, in order: `blockN.conv`, `blockN.bn`,
    /// `blockN.pool`, `flatten`, `hidden.pre`, `hidden`, `logits`.
    pub trace: Vec<(String, Var)>,
}

fn uniform<T: Scalar>(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::lit(rng.gen_range(-bound..=bound)))
        .collect();
    Tensor::new(shape, data).expect("shape and data agree")
}

/// Builds the model for `task` with fan-in scaled uniform initialization:
/// weights in `±sqrt(6 / fan_in)`, biases in `±1 / sqrt(fan_in)`, batch-norm
/// scale 1 and shift 0.
pub fn build_model<T: Scalar>(task: TaskKind, seed: u64) -> CnnModel<T> {
    let geometry = Geometry::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "init"));
    let mut params = Vec::with_capacity(14);
    let mut batchnorm = Vec::with_capacity(3);
    let mut cin = geometry.input_channels;
    for &cout in &geometry.conv_channels {
        let fan_in = (cin * KERNEL_SIZE) as f64;
        params.push(uniform(
            &[cout, cin, KERNEL_SIZE],
            (6.0 / fan_in).sqrt(),
            &mut rng,
        ));
        params.push(uniform(&[cout], 1.0 / fan_in.sqrt(), &mut rng));
        params.push(Tensor::full(&[cout], T::one()));
        params.push(Tensor::zeros(&[cout]));
        batchnorm.push(BatchNormState::new(cout));
        cin = cout;
    }
    let classes = task.class_count();
    for (fan_in, fan_out) in [
        (geometry.flatten_width, HIDDEN_UNITS),
        (HIDDEN_UNITS, classes),
    ] {
        let f = fan_in as f64;
        params.push(uniform(&[fan_out, fan_in], (6.0 / f).sqrt(), &mut rng));
        params.push(uniform(&[fan_out], 1.0 / f.sqrt(), &mut rng));
    }
    CnnModel {
        task,
        class_map: task.class_names(),
        seed,
        geometry,
        params,
        batchnorm,
        normalization: NormalizePolicy::None,
        train_config: None,
        split: None,
    }
}

/// Total trainable element count: conv weights and biases, batch-norm scale
/// and shift, dense weights and biases. Running statistics are excluded.
pub fn count_parameters<T: Scalar>(model: &CnnModel<T>) -> usize {
    model.params.iter().map(|p| p.len()).sum()
}

impl<T: Scalar> CnnModel<T> {
    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn class_map(&self) -> &[String] {
        &self.class_map
    }

    pub fn class_count(&self) -> usize {
        self.class_map.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn parameters(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn batchnorm_states(&self) -> &[BatchNormState<T>] {
        &self.batchnorm
    }

    pub fn normalization(&self) -> NormalizePolicy {
        self.normalization
    }

    pub fn set_normalization(&mut self, policy: NormalizePolicy) {
        self.normalization = policy;
    }

    pub fn train_config(&self) -> Option<&TrainConfig> {
        self.train_config.as_ref()
    }

    pub fn split_spec(&self) -> Option<&SplitSpec> {
        self.split.as_ref()
    }

    pub fn set_split_spec(&mut self, split: Option<SplitSpec>) {
        self.split = split;
    }

    /// Records a forward pass of `input: [B, 4, 1024]` on `graph`.
    ///
    /// Parameters become leaves that require gradients when `with_grads` is set.
    /// In train mode the batch-norm running statistics are updated in place.
    pub fn record_forward<R: Rng + ?Sized>(
        &mut self,
        graph: &mut Graph<T>,
        input: Tensor<T>,
        mode: Mode,
        with_grads: bool,
        rng: &mut R,
    ) -> Result<ForwardPass> {
        record(
            &self.geometry,
            &self.params,
            &mut self.batchnorm,
            graph,
            input,
            mode,
            with_grads,
            rng,
        )
    }

    /// Eval-mode forward: `(logits [B, C], embeddings [B, 256])`.
    pub fn infer(&self, input: Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        // eval mode neither reads the rng nor writes the running statistics
        let mut bn = self.batchnorm.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut graph = Graph::new();
        let pass = record(
            &self.geometry,
            &self.params,
            &mut bn,
            &mut graph,
            input,
            Mode::Eval,
            false,
            &mut rng,
        )?;
        Ok((
            graph.value(pass.logits).clone(),
            graph.value(pass.embedding).clone(),
        ))
    }

    /// Replaces the batch-norm running statistics with the exact moments of
    /// each layer's input over `batches`, computed with dropout off and the
    /// earlier layers already re-estimated.
    pub fn recalibrate_batchnorm(&mut self, batches: &[Tensor<T>]) -> Result<()> {
        for layer in 0..self.batchnorm.len() {
            let channels = self.batchnorm[layer].channels();
            let mut acc = vec![Moments::default(); channels];
            for batch in batches {
                let g = &self.geometry;
                batch.expect_shape(
                    "model input",
                    &[None, Some(g.input_channels), Some(g.input_length)],
                )?;
                let mut x = batch.clone();
                for b in 0..=layer {
                    let p = &self.params[4 * b..4 * b + 4];
                    x = conv1d_forward(&x, &p[0], &p[1])?;
                    if b == layer {
                        break;
                    }
                    x = batchnorm1d_forward(&x, &p[2], &p[3], &mut self.batchnorm[b], Mode::Eval)?;
                    x = maxpool1d_forward(&relu(&x))?.0;
                }
                let (n, c, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let (mean, var) = channel_moments(x.data(), n, c, l);
                for (k, a) in acc.iter_mut().enumerate() {
                    a.merge((n * l) as f64, mean[k].as_f64(), var[k].as_f64());
                }
            }
            if acc.first().is_none_or(|a| a.count < 2.0) {
                return Err(Error::DegenerateInput(
                    "batch-norm re-estimation needs at least 2 values per channel".into(),
                ));
            }
            let state = &mut self.batchnorm[layer];
            for (k, a) in acc.iter().enumerate() {
                state.running_mean[k] = T::lit(a.mean);
                state.running_var[k] = T::lit(a.m2 / (a.count - 1.0));
            }
        }
        Ok(())
    }

    pub(crate) fn snapshot(&self) -> (Vec<Tensor<T>>, Vec<BatchNormState<T>>) {
        (self.params.clone(), self.batchnorm.clone())
    }

    pub(crate) fn restore(&mut self, snapshot: (Vec<Tensor<T>>, Vec<BatchNormState<T>>)) {
        self.params = snapshot.0;
        self.batchnorm = snapshot.1;
    }
}

/// Count, mean and summed squared deviation, merged chunk by chunk.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn merge(&mut self, count: f64, mean: f64, biased_var: f64) {
        let total = self.count + count;
        let delta = mean - self.mean;
        self.m2 += biased_var * count + delta * delta * self.count * count / total;
        self.mean += delta * count / total;
        self.count = total;
    }
}

#[allow(clippy::too_many_arguments)]
fn record<T: Scalar, R: Rng + ?Sized>(
    g: &Geometry,
    params: &[Tensor<T>],
    batchnorm: &mut [BatchNormState<T>],
    graph: &mut Graph<T>,
    input: Tensor<T>,
    mode: Mode,
    with_grads: bool,
    rng: &mut R,
) -> Result<ForwardPass> {
    input.expect_shape(
        "model input",
        &[None, Some(g.input_channels), Some(g.input_length)],
    )?;
    let batch = input.shape()[0];
    let params: Vec<Var> = params
        .iter()
        .map(|p| graph.leaf(p.clone().with_requires_grad(with_grads)))
        .collect();
    let mut trace = Vec::new();
    let mut x = graph.leaf(input);
    for b in 0..3 {
        let p = &params[4 * b..4 * b + 4];
        x = graph.conv1d(x, p[0], p[1])?;
        trace.push((format!("block{}.conv", b + 1), x));
        x = graph.batchnorm1d(x, p[2], p[3], &mut batchnorm[b], mode)?;
        trace.push((format!("block{}.bn", b + 1), x));
        x = graph.relu(x);
        x = graph.maxpool1d(x)?;
        trace.push((format!("block{}.pool", b + 1), x));
        x = graph.dropout(x, CONV_DROPOUT, mode, rng)?;
    }
    x = graph.reshape(x, &[batch, g.flatten_width])?;
    trace.push(("flatten".into(), x));
    x = graph.dense(x, params[12], params[13])?;
    trace.push(("hidden.pre".into(), x));
    let embedding = graph.relu(x);
    trace.push(("hidden".into(), embedding));
    x = graph.dropout(embedding, HIDDEN_DROPOUT, mode, rng)?;
    let logits = graph.dense(x, params[14], params[15])?;
    trace.push(("logits".into(), logits));
    Ok(ForwardPass {
        logits,
        embedding,
        params,
        trace,
    })
}
