use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex32;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::labels::{Protocol, Transmitter};
use crate::error::{Error, Result};
use crate::features::WINDOW_LEN;

/// Sidecar metadata of one capture. Keys beyond the required ones are kept verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingMeta {
    pub center_frequency_hz: f64,
    pub sample_rate_hz: f64,
    pub protocol: Protocol,
    pub transmitter: Transmitter,
    pub day: String,
    pub capture_id: String,
    pub extra: BTreeMap<String, Value>,
}

#[derive(Serialize, Deserialize)]
struct RawMeta {
    center_frequency_hz: f64,
    sample_rate_hz: f64,
    protocol: String,
    transmitter: String,
    day: String,
    capture_id: String,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

impl RecordingMeta {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawMeta = serde_json::from_str(text)
            .map_err(|e| Error::Format(format!("metadata sidecar: {e}")))?;
        let meta = Self {
            center_frequency_hz: raw.center_frequency_hz,
            sample_rate_hz: raw.sample_rate_hz,
            protocol: raw.protocol.parse()?,
            transmitter: raw.transmitter.parse()?,
            day: raw.day,
            capture_id: raw.capture_id,
            extra: raw.extra,
        };
        if !(meta.sample_rate_hz > 0.0 && meta.sample_rate_hz.is_finite()) {
            return Err(Error::Format(format!(
                "sample rate must be positive, got {}",
                meta.sample_rate_hz
            )));
        }
        if !meta.center_frequency_hz.is_finite() {
            return Err(Error::Format("center frequency must be finite".into()));
        }
        Ok(meta)
    }

    pub fn to_json(&self) -> String {
        let raw = RawMeta {
            center_frequency_hz: self.center_frequency_hz,
            sample_rate_hz: self.sample_rate_hz,
            protocol: self.protocol.name().to_string(),
            transmitter: self.transmitter.name().to_string(),
            day: self.day.clone(),
            capture_id: self.capture_id.clone(),
            extra: self.extra.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("metadata serializes")
    }
}

/// A labeled complex-baseband capture.
#[derive(Debug, Clone, PartialEq)]
pub struct IqRecording {
    pub samples: Vec<Complex32>,
    pub meta: RecordingMeta,
}

impl IqRecording {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Decodes interleaved little-endian f32 I/Q pairs.
pub fn decode_iq(bytes: &[u8]) -> Result<Vec<Complex32>> {
    if bytes.len() % 4 != 0 {
        return Err(Error::Format(format!(
            "{} bytes is not a whole number of f32 values",
            bytes.len()
        )));
    }
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!(
            "odd float count {} (I/Q values must pair)",
            bytes.len() / 4
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| {
            Complex32::new(
                f32::from_le_bytes(c[..4].try_into().unwrap()),
                f32::from_le_bytes(c[4..].try_into().unwrap()),
            )
        })
        .collect())
}

pub fn encode_iq(samples: &[Complex32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len() * 8);
    for s in samples {
        out.extend_from_slice(&s.re.to_le_bytes());
        out.extend_from_slice(&s.im.to_le_bytes());
    }
    out
}

pub fn ingest_recording(data_path: &Path, meta_path: &Path) -> Result<IqRecording> {
    let text = fs::read_to_string(meta_path).map_err(|e| Error::io(meta_path, e))?;
    let meta = RecordingMeta::from_json(&text)?;
    let bytes = fs::read(data_path).map_err(|e| Error::io(data_path, e))?;
    let samples =
        decode_iq(&bytes).map_err(|e| Error::Format(format!("{}: {e}", data_path.display())))?;
    if samples.len() < WINDOW_LEN {
        return Err(Error::Input(format!(
            "{}: {} samples is shorter than one {WINDOW_LEN}-sample window",
            data_path.display(),
            samples.len()
        )));
    }
    Ok(IqRecording { samples, meta })
}

pub fn write_recording(rec: &IqRecording, data_path: &Path, meta_path: &Path) -> Result<()> {
    fs::write(data_path, encode_iq(&rec.samples)).map_err(|e| Error::io(data_path, e))?;
    fs::write(meta_path, rec.meta.to_json()).map_err(|e| Error::io(meta_path, e))
}

/// Sidecar path for a data file: `x.iq` -> `x.json`.
pub fn sidecar_path(data_path: &Path) -> PathBuf {
    data_path.with_extension("json")
}

/// Every `.iq` file under `dir`, recursively, sorted by path.
pub fn list_recordings(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(dir).to_path_buf();
            Error::io(path, e.into())
        })?;
        if entry.file_type().is_file() && entry.path().extension().is_some_and(|e| e == "iq") {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

/// Ingests every `.iq` + sidecar pair in `dir`, in file-name order.
pub fn load_corpus(dir: &Path) -> Result<Vec<IqRecording>> {
    let paths = list_recordings(dir)?;
    if paths.is_empty() {
        return Err(Error::Input(format!(
            "no .iq recordings in {}",
            dir.display()
        )));
    }
    paths
        .par_iter()
        .map(|p| ingest_recording(p, &sidecar_path(p)))
        .collect()
}

/// Defaults written into sidecars by [`import_directory_layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct ImportDefaults {
    pub center_frequency_hz: f64,
    pub wifi_sample_rate_hz: f64,
    pub cellular_sample_rate_hz: f64,
}

impl Default for ImportDefaults {
    fn default() -> Self {
        Self {
            center_frequency_hz: 2.685e9,
            wifi_sample_rate_hz: 5e6,
            cellular_sample_rate_hz: 7.68e6,
        }
    }
}

/// Writes missing sidecars for captures laid out as
/// `root/<transmitter>/<protocol>/<day>/<name>.iq`. Returns the sidecars written.
pub fn import_directory_layout(root: &Path, defaults: &ImportDefaults) -> Result<Vec<PathBuf>> {
    let subdirs = |p: &Path| -> Result<Vec<PathBuf>> {
        let mut v = Vec::new();
        for e in fs::read_dir(p).map_err(|e| Error::io(p, e))? {
            let path = e.map_err(|e| Error::io(p, e))?.path();
            if path.is_dir() {
                v.push(path);
            }
        }
        v.sort();
        Ok(v)
    };
    let name = |p: &Path| {
        p.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    let mut written = Vec::new();
    for tx_dir in subdirs(root)? {
        let transmitter: Transmitter = name(&tx_dir).parse()?;
        for proto_dir in subdirs(&tx_dir)? {
            let protocol: Protocol = name(&proto_dir).parse()?;
            for day_dir in subdirs(&proto_dir)? {
                let day = name(&day_dir);
                for data in list_recordings(&day_dir)? {
                    let meta_path = sidecar_path(&data);
                    if meta_path.exists() {
                        continue;
                    }
                    let stem = data
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default();
                    let meta = RecordingMeta {
                        center_frequency_hz: defaults.center_frequency_hz,
                        sample_rate_hz: match protocol {
                            Protocol::Wifi => defaults.wifi_sample_rate_hz,
                            _ => defaults.cellular_sample_rate_hz,
                        },
                        protocol,
                        transmitter,
                        day: day.clone(),
                        capture_id: format!(
                            "{}_{}_{}_{}",
                            transmitter.name(),
                            name(&proto_dir),
                            day,
                            stem
                        ),
                        extra: BTreeMap::new(),
                    };
                    fs::write(&meta_path, meta.to_json()).map_err(|e| Error::io(&meta_path, e))?;
                    written.push(meta_path);
                }
            }
        }
    }
    Ok(written)
}
