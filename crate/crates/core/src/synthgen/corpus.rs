use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{apply_awgn, apply_transmitter_fingerprint, generate_waveform, Scenario};
use crate::datasets::{
    sidecar_path, write_recording, IqRecording, Protocol, RecordingMeta, Transmitter,
};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// File name of the manifest written next to a generated corpus.
pub const CORPUS_MANIFEST: &str = "corpus_manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub capture_id: String,
    /// Relative to the corpus directory.
    pub data_file: PathBuf,
    pub meta_file: PathBuf,
    pub protocol: Protocol,
    pub transmitter: Transmitter,
    pub profile: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub scenario: Scenario,
    pub recordings: Vec<CorpusEntry>,
}

/// Writes one `.iq` + sidecar per (pair, repetition) into `dir`, plus
/// [`CORPUS_MANIFEST`]. Output depends only on the scenario.
pub fn generate_corpus(scenario: &Scenario, dir: &Path) -> Result<CorpusManifest> {
    scenario.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let jobs: Vec<(usize, usize)> = (0..scenario.pairs.len())
        .flat_map(|p| (0..scenario.recordings_per_pair).map(move |r| (p, r)))
        .collect();
    let recordings = jobs
        .par_iter()
        .map(|&(p, r)| write_one(scenario, p, r, dir))
        .collect::<Result<Vec<_>>>()?;
    let manifest = CorpusManifest {
        scenario: scenario.clone(),
        recordings,
    };
    let path = dir.join(CORPUS_MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn write_one(scenario: &Scenario, pair: usize, rep: usize, dir: &Path) -> Result<CorpusEntry> {
    let profile = &scenario.pairs[pair].profile;
    let fingerprint = &scenario.pairs[pair].fingerprint;
    let seed = derive_seed(scenario.seed, &format!("recording/{pair}/{rep}"));
    let clean = generate_waveform(
        profile,
        scenario.samples_per_recording,
        derive_seed(seed, "waveform"),
    )?;
    let stamped = apply_transmitter_fingerprint(
        &clean,
        fingerprint,
        profile.sample_rate_hz,
        derive_seed(seed, "phase-noise"),
    );
    let samples = match scenario.snr_db {
        Some(snr) => apply_awgn(&stamped, snr, derive_seed(seed, "awgn"))?,
        None => stamped,
    };

    let capture_id = format!(
        "{}_{}_{pair:02}_{rep:02}",
        fingerprint.transmitter.name(),
        profile.name
    );
    let mut extra = BTreeMap::new();
    extra.insert("generator".to_string(), json!("specmon synthgen"));
    extra.insert("profile".to_string(), json!(profile.name));
    extra.insert("seed".to_string(), json!(seed));
    extra.insert("snr_db".to_string(), json!(scenario.snr_db));
    let rec = IqRecording {
        samples,
        meta: RecordingMeta {
            center_frequency_hz: scenario.center_frequency_hz,
            sample_rate_hz: profile.sample_rate_hz,
            protocol: profile.protocol,
            transmitter: fingerprint.transmitter,
            day: "synthetic".into(),
            capture_id: capture_id.clone(),
            extra,
        },
    };
    let data_file = PathBuf::from(format!("{capture_id}.iq"));
    let meta_file = sidecar_path(&data_file);
    write_recording(&rec, &dir.join(&data_file), &dir.join(&meta_file))?;
    Ok(CorpusEntry {
        capture_id,
        data_file,
        meta_file,
        protocol: profile.protocol,
        transmitter: fingerprint.transmitter,
        profile: profile.name.clone(),
        seed,
    })
}
