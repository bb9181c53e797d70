use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::CnnModel;
use crate::error::{Error, Result};
use crate::features::{normalize_window, ChannelizedWindow, NormalizePolicy, CHANNELS, WINDOW_LEN};
use crate::nn::{adam_step, softmax, AdamState, Graph, Mode, Scalar, Tensor};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// Validation passes per epoch; the last one always lands on the epoch boundary.
    #[serde(default = "one")]
    pub evals_per_epoch: usize,
    /// Training examples used to re-estimate batch-norm statistics with
    /// dropout off before each validation pass; 0 keeps the running averages.
    #[serde(default = "recalibration_examples")]
    pub batchnorm_recalibration: usize,
}

fn one() -> usize {
    1
}

fn recalibration_examples() -> usize {
    256
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 256,
            lr: 0.001,
            seed: 0,
            shuffle: true,
            evals_per_epoch: 1,
            batchnorm_recalibration: recalibration_examples(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.evals_per_epoch == 0 {
            return Err(Error::Config("evals per epoch must be at least 1".into()));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, train_len: usize) -> usize {
        train_len.div_ceil(self.batch_size)
    }
}

/// One validation checkpoint during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    /// Wall-clock seconds since training started.
    pub seconds: f64,
    /// Fractional epoch progress, `1.0` at the end of the first epoch.
    pub epoch: f64,
    /// Mean training loss over the steps since the previous record.
    pub loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<HistoryRecord>,
}

impl TrainHistory {
    pub fn best_accuracy(&self) -> Option<f64> {
        self.records.iter().map(|r| r.val_accuracy).reduce(f64::max)
    }

    /// Seconds until validation accuracy first reached `threshold`.
    pub fn time_to_accuracy(&self, threshold: f64) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.val_accuracy >= threshold)
            .map(|r| r.seconds)
    }
}

/// Model-ready inputs `[N, 4, 1024]` with class indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExampleSet {
    data: Vec<f32>,
    labels: Vec<usize>,
}

const EXAMPLE_LEN: usize = CHANNELS * WINDOW_LEN;

impl ExampleSet {
    pub fn from_windows<'a, I>(windows: I, normalization: NormalizePolicy) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a ChannelizedWindow, usize)>,
    {
        let mut set = Self::default();
        for (w, label) in windows {
            match normalization {
                NormalizePolicy::None => set.data.extend_from_slice(w.data()),
                p => set.data.extend_from_slice(normalize_window(w, p)?.data()),
            }
            set.labels.push(label);
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn example(&self, i: usize) -> &[f32] {
        &self.data[i * EXAMPLE_LEN..(i + 1) * EXAMPLE_LEN]
    }

    fn batch<T: Scalar>(&self, idx: &[usize]) -> Tensor<T> {
        let mut data = Vec::with_capacity(idx.len() * EXAMPLE_LEN);
        for &i in idx {
            data.extend(self.example(i).iter().map(|&v| T::lit(v as f64)));
        }
        Tensor::new(&[idx.len(), CHANNELS, WINDOW_LEN], data).expect("batch shape")
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

const INFER_BATCH: usize = 256;

/// Eval-mode predictions and hidden-layer embeddings for every example.
pub fn infer_set<T: Scalar>(
    model: &CnnModel<T>,
    set: &ExampleSet,
) -> Result<(Vec<usize>, Vec<Vec<f32>>)> {
    let mut preds = Vec::with_capacity(set.len());
    let mut embeds = Vec::with_capacity(set.len());
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(INFER_BATCH) {
        let (logits, emb) = model.infer(set.batch(chunk))?;
        let c = logits.shape()[1];
        preds.extend(logits.data().chunks(c).map(argmax));
        let h = emb.shape()[1];
        embeds.extend(
            emb.data()
                .chunks(h)
                .map(|r| r.iter().map(|v| v.as_f64() as f32).collect()),
        );
    }
    Ok((preds, embeds))
}

pub fn predict_set<T: Scalar>(model: &CnnModel<T>, set: &ExampleSet) -> Result<Vec<usize>> {
    let mut preds = Vec::with_capacity(set.len());
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(INFER_BATCH) {
        let (logits, _) = model.infer(set.batch(chunk))?;
        let c = logits.shape()[1];
        preds.extend(logits.data().chunks(c).map(argmax));
    }
    Ok(preds)
}

pub fn accuracy<T: Scalar>(model: &CnnModel<T>, set: &ExampleSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Evaluation("accuracy of an empty set".into()));
    }
    let preds = predict_set(model, set)?;
    let hits = preds
        .iter()
        .zip(set.labels())
        .filter(|(p, y)| p == y)
        .count();
    Ok(hits as f64 / set.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class_index: usize,
    pub class_name: String,
    pub probabilities: Vec<f64>,
}

fn model_input<T: Scalar>(
    model: &CnnModel<T>,
    windows: &[&ChannelizedWindow],
) -> Result<Tensor<T>> {
    let set = ExampleSet::from_windows(windows.iter().map(|w| (*w, 0)), model.normalization())?;
    let idx: Vec<usize> = (0..set.len()).collect();
    Ok(set.batch(&idx))
}

/// Class with the highest probability (lowest index on ties) and the full distribution.
pub fn predict<T: Scalar>(model: &CnnModel<T>, window: &ChannelizedWindow) -> Result<Prediction> {
    Ok(predict_many(model, &[window])?.remove(0))
}

pub fn predict_many<T: Scalar>(
    model: &CnnModel<T>,
    windows: &[&ChannelizedWindow],
) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(INFER_BATCH) {
        let (logits, _) = model.infer(model_input(model, chunk)?)?;
        let probs = softmax(&logits)?;
        let c = logits.shape()[1];
        for (lrow, prow) in logits.data().chunks(c).zip(probs.data().chunks(c)) {
            let k = argmax(lrow);
            out.push(Prediction {
                class_index: k,
                class_name: model.class_map()[k].clone(),
                probabilities: prow.iter().map(|p| p.as_f64()).collect(),
            });
        }
    }
    Ok(out)
}

/// Post-ReLU activations of the 256-unit hidden layer.
pub fn extract_embedding<T: Scalar>(
    model: &CnnModel<T>,
    window: &ChannelizedWindow,
) -> Result<Vec<f32>> {
    let (_, emb) = model.infer(model_input(model, &[window])?)?;
    Ok(emb.data().iter().map(|v| v.as_f64() as f32).collect())
}

/// Mini-batch Adam training. Returns the model with the parameters of the
/// best validation accuracy seen (earliest on ties) and the history.
pub fn train<T: Scalar>(
    model: CnnModel<T>,
    train_set: &ExampleSet,
    val_set: &ExampleSet,
    cfg: &TrainConfig,
) -> Result<(CnnModel<T>, TrainHistory)> {
    train_with_observer(model, train_set, val_set, cfg, |_| {})
}

pub fn train_with_observer<T: Scalar>(
    mut model: CnnModel<T>,
    train_set: &ExampleSet,
    val_set: &ExampleSet,
    cfg: &TrainConfig,
    mut observe: impl FnMut(&HistoryRecord),
) -> Result<(CnnModel<T>, TrainHistory)> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Config(
            "training and validation sets must be non-empty".into(),
        ));
    }
    let classes = model.class_count();
    if let Some(&bad) = train_set
        .labels()
        .iter()
        .chain(val_set.labels())
        .find(|&&y| y >= classes)
    {
        return Err(Error::Label {
            label: bad,
            classes,
        });
    }

    let names = super::model::parameter_names();
    let mut adam: Vec<AdamState<T>> = model
        .parameters()
        .iter()
        .map(|p| AdamState::new(p.len(), cfg.lr))
        .collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "shuffle"));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "dropout"));

    let steps = cfg.steps_per_epoch(train_set.len());
    let evals = cfg.evals_per_epoch.min(steps);
    // step indices (1-based within the epoch) after which validation runs
    let eval_points: Vec<usize> = (1..=evals).map(|k| (k * steps).div_ceil(evals)).collect();

    let recalibration: Vec<Tensor<T>> = {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "recalibration"));
        let amount = cfg.batchnorm_recalibration.min(train_set.len());
        let mut idx = rand::seq::index::sample(&mut rng, train_set.len(), amount).into_vec();
        idx.sort_unstable();
        idx.chunks(INFER_BATCH)
            .map(|c| train_set.batch(c))
            .collect()
    };

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, (Vec<Tensor<T>>, Vec<_>))> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let start = Instant::now();

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        let (mut loss_sum, mut loss_n) = (0.0f64, 0usize);
        for (step, idx) in order.chunks(cfg.batch_size).enumerate() {
            let labels: Vec<usize> = idx.iter().map(|&i| train_set.labels()[i]).collect();
            let mut graph = Graph::new();
            let pass = model.record_forward(
                &mut graph,
                train_set.batch(idx),
                Mode::Train,
                true,
                &mut dropout_rng,
            )?;
            let (loss, _) = graph.softmax_cross_entropy(pass.logits, &labels)?;
            let loss_value = graph.value(loss).data()[0].as_f64();
            if !loss_value.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss {loss_value} at epoch {} batch {step}",
                    epoch + 1
                )));
            }
            graph.backward(loss)?;
            for (k, var) in pass.params.iter().enumerate() {
                let grad = graph
                    .take_grad(*var)
                    .unwrap_or_else(|| vec![T::zero(); model.parameters()[k].len()]);
                adam_step(
                    &mut model.parameters_mut()[k],
                    &grad,
                    &mut adam[k],
                    &names[k],
                )
                .map_err(|e| match e {
                    Error::Training(msg) => {
                        Error::Training(format!("{msg} at epoch {} batch {step}", epoch + 1))
                    }
                    other => other,
                })?;
            }
            loss_sum += loss_value;
            loss_n += 1;

            if eval_points.contains(&(step + 1)) {
                let mut candidate = model.clone();
                if !recalibration.is_empty() {
                    candidate.recalibrate_batchnorm(&recalibration)?;
                }
                let val_accuracy = accuracy(&candidate, val_set)?;
                let record = HistoryRecord {
                    seconds: start.elapsed().as_secs_f64(),
                    epoch: epoch as f64 + (step + 1) as f64 / steps as f64,
                    loss: loss_sum / loss_n as f64,
                    val_accuracy,
                };
                (loss_sum, loss_n) = (0.0, 0);
                observe(&record);
                history.records.push(record);
                if best.as_ref().is_none_or(|(b, _)| val_accuracy > *b) {
                    best = Some((val_accuracy, candidate.snapshot()));
                }
            }
        }
    }
    if let Some((_, snap)) = best {
        model.restore(snap);
    }
    model.train_config = Some(cfg.clone());
    Ok((model, history))
}
