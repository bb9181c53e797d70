use std::ops::Range;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::labels::{Protocol, Transmitter};
use super::recording::IqRecording;
use crate::classifier::TaskKind;
use crate::error::{Error, Result};
use crate::features::{channels_from_samples, ChannelizedWindow, WINDOW_LEN};
use crate::seed::derive_seed;

/// Class index of a (protocol, transmitter) pair for `task`. Joint classes
/// are transmitter-major: `transmitter * 3 + protocol`.
pub fn encode_label(protocol: Protocol, transmitter: Transmitter, task: TaskKind) -> usize {
    match task {
        TaskKind::Protocol => protocol.index(),
        TaskKind::Transmitter => transmitter.index(),
        TaskKind::Joint => transmitter.index() * Protocol::ALL.len() + protocol.index(),
    }
}

/// One model input cut from a recording.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub channels: ChannelizedWindow,
    pub protocol: Protocol,
    pub transmitter: Transmitter,
    pub capture_id: String,
    pub offset: usize,
    /// Sample count of the source recording.
    pub source_len: usize,
}

impl LabeledWindow {
    pub fn label(&self, task: TaskKind) -> usize {
        encode_label(self.protocol, self.transmitter, task)
    }

    pub fn sample_range(&self) -> Range<usize> {
        self.offset..self.offset + WINDOW_LEN
    }

    pub(crate) fn cut(rec: &IqRecording, offset: usize) -> Self {
        Self {
            channels: channels_from_samples(&rec.samples[offset..offset + WINDOW_LEN]),
            protocol: rec.meta.protocol,
            transmitter: rec.meta.transmitter,
            capture_id: rec.meta.capture_id.clone(),
            offset,
            source_len: rec.len(),
        }
    }
}

/// Per-class counts for `total` windows; the remainder goes to the lowest class indices.
pub fn class_counts(total: usize, classes: usize) -> Vec<usize> {
    (0..classes)
        .map(|k| total / classes + usize::from(k < total % classes))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPolicy {
    /// Seeded shuffle of one sampled pool, then partition.
    #[default]
    Random,
    /// Train, validation and test windows come from disjoint thirds of every recording.
    ByOffset,
}

impl FromStr for SplitPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "by_offset" => Ok(Self::ByOffset),
            other => Err(Error::Config(format!(
                "unknown split policy {other:?}, expected random or by_offset"
            ))),
        }
    }
}

/// Everything needed to regenerate a split from a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub sizes: [usize; 3],
    pub policy: SplitPolicy,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            sizes: [38_000, 2_000, 10_000],
            policy: SplitPolicy::Random,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledWindow>,
    pub val: Vec<LabeledWindow>,
    pub test: Vec<LabeledWindow>,
    pub seed: u64,
    pub policy: SplitPolicy,
}

/// Region `part` of three equal contiguous regions of a `len`-sample recording.
fn third(len: usize, part: usize) -> Range<usize> {
    part * len / 3..(part + 1) * len / 3
}

fn sample_region(
    recordings: &[IqRecording],
    total: usize,
    task: TaskKind,
    rng: &mut ChaCha8Rng,
    region: impl Fn(usize) -> Range<usize>,
) -> Result<Vec<LabeledWindow>> {
    let names = task.class_names();
    let counts = class_counts(total, task.class_count());
    let mut out = Vec::with_capacity(total);
    for (class, &count) in counts.iter().enumerate() {
        let members: Vec<&IqRecording> = recordings
            .iter()
            .filter(|r| encode_label(r.meta.protocol, r.meta.transmitter, task) == class)
            .collect();
        if members.is_empty() {
            if count == 0 {
                continue;
            }
            return Err(Error::Coverage(names[class].clone()));
        }
        for _ in 0..count {
            let rec = members[rng.gen_range(0..members.len())];
            let r = region(rec.len());
            if r.len() < WINDOW_LEN {
                return Err(Error::Input(format!(
                    "recording {} too short: region of {} samples cannot hold a {WINDOW_LEN}-sample window",
                    rec.meta.capture_id,
                    r.len()
                )));
            }
            let offset = rng.gen_range(r.start..=r.end - WINDOW_LEN);
            out.push(LabeledWindow::cut(rec, offset));
        }
    }
    Ok(out)
}

/// Draws `total` windows with equal per-class counts (±1). Each window picks
/// a recording of its class uniformly, then a start offset uniformly.
pub fn sample_windows(
    recordings: &[IqRecording],
    total: usize,
    task: TaskKind,
    seed: u64,
) -> Result<Vec<LabeledWindow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "windows"));
    sample_region(recordings, total, task, &mut rng, |len| 0..len)
}

/// Partitions `windows` into train, validation and test of the given sizes.
///
/// `Random` shuffles with `seed` then cuts in order. `ByOffset` assigns each
/// window to the third of its recording that contains it; windows must lie
/// wholly inside one third and the resulting group sizes must match `sizes`.
pub fn split_dataset(
    windows: Vec<LabeledWindow>,
    sizes: [usize; 3],
    seed: u64,
    policy: SplitPolicy,
) -> Result<DatasetSplit> {
    let total: usize = sizes.iter().sum();
    if total != windows.len() {
        return Err(Error::Config(format!(
            "split sizes {sizes:?} sum to {total}, but {} windows were sampled",
            windows.len()
        )));
    }
    let mut parts: [Vec<LabeledWindow>; 3] = Default::default();
    match policy {
        SplitPolicy::Random => {
            let mut windows = windows;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "split"));
            windows.shuffle(&mut rng);
            let mut it = windows.into_iter();
            for (part, &n) in parts.iter_mut().zip(&sizes) {
                part.extend(it.by_ref().take(n));
            }
        }
        SplitPolicy::ByOffset => {
            for w in windows {
                let r = w.sample_range();
                let part = (0..3)
                    .find(|&p| {
                        let t = third(w.source_len, p);
                        t.start <= r.start && r.end <= t.end
                    })
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "window at {} of {} straddles a region boundary",
                            w.offset, w.capture_id
                        ))
                    })?;
                parts[part].push(w);
            }
            for (p, (part, &n)) in parts.iter().zip(&sizes).enumerate() {
                if part.len() != n {
                    return Err(Error::Config(format!(
                        "region {p} holds {} windows, split wants {n}",
                        part.len()
                    )));
                }
            }
        }
    }
    let [train, val, test] = parts;
    Ok(DatasetSplit {
        train,
        val,
        test,
        seed,
        policy,
    })
}

/// Samples and splits a corpus according to `spec`.
///
/// Under `ByOffset` each split is sampled class-uniformly from its own third
/// of every recording, so no test window shares samples with a training window.
pub fn build_split(
    recordings: &[IqRecording],
    spec: &SplitSpec,
    task: TaskKind,
) -> Result<DatasetSplit> {
    match spec.policy {
        SplitPolicy::Random => {
            let windows = sample_windows(recordings, spec.total(), task, spec.seed)?;
            split_dataset(windows, spec.sizes, spec.seed, SplitPolicy::Random)
        }
        SplitPolicy::ByOffset => {
            let mut windows = Vec::with_capacity(spec.total());
            for (part, &n) in spec.sizes.iter().enumerate() {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &format!("windows/{part}")));
                windows.extend(sample_region(recordings, n, task, &mut rng, |len| {
                    third(len, part)
                })?);
            }
            split_dataset(windows, spec.sizes, spec.seed, SplitPolicy::ByOffset)
        }
    }
}
