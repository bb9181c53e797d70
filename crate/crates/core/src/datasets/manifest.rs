use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::labels::{Protocol, Transmitter};
use super::recording::IqRecording;
use super::sampling::{DatasetSplit, LabeledWindow, SplitPolicy};
use crate::classifier::TaskKind;
use crate::error::{Error, Result};
use crate::features::WINDOW_LEN;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub split: String,
    pub capture_id: String,
    pub offset: usize,
    pub protocol: Protocol,
    pub transmitter: Transmitter,
    pub label: usize,
}

/// Window-level record of a split, enough to rebuild it from the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub policy: SplitPolicy,
    pub task: TaskKind,
    pub sizes: [usize; 3],
    pub windows: Vec<ManifestEntry>,
}

const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

impl DatasetManifest {
    pub fn from_split(split: &DatasetSplit, task: TaskKind) -> Self {
        let parts = [&split.train, &split.val, &split.test];
        let windows = parts
            .iter()
            .zip(SPLIT_NAMES)
            .flat_map(|(ws, name)| {
                ws.iter().map(move |w| ManifestEntry {
                    split: name.to_string(),
                    capture_id: w.capture_id.clone(),
                    offset: w.offset,
                    protocol: w.protocol,
                    transmitter: w.transmitter,
                    label: w.label(task),
                })
            })
            .collect();
        Self {
            seed: split.seed,
            policy: split.policy,
            task,
            sizes: [split.train.len(), split.val.len(), split.test.len()],
            windows,
        }
    }

    /// Cuts every listed window out of `recordings` again.
    pub fn materialize(&self, recordings: &[IqRecording]) -> Result<DatasetSplit> {
        let by_id: HashMap<&str, &IqRecording> = recordings
            .iter()
            .map(|r| (r.meta.capture_id.as_str(), r))
            .collect();
        let mut parts: [Vec<LabeledWindow>; 3] = Default::default();
        for e in &self.windows {
            let rec = by_id.get(e.capture_id.as_str()).ok_or_else(|| {
                Error::Input(format!(
                    "manifest references unknown capture {:?}",
                    e.capture_id
                ))
            })?;
            if e.offset + WINDOW_LEN > rec.len() {
                return Err(Error::Input(format!(
                    "manifest window at {} exceeds capture {:?}",
                    e.offset, e.capture_id
                )));
            }
            let part = SPLIT_NAMES
                .iter()
                .position(|&n| n == e.split)
                .ok_or_else(|| Error::Format(format!("unknown split name {:?}", e.split)))?;
            parts[part].push(LabeledWindow::cut(rec, e.offset));
        }
        let [train, val, test] = parts;
        Ok(DatasetSplit {
            train,
            val,
            test,
            seed: self.seed,
            policy: self.policy,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}
