//! Binary checkpoint format:
//!
//! ```text
//! "SPMC" | version: u16 LE | header_len: u32 LE | header JSON
//!        | payload: f32 LE per tensor element, in header order | crc32(payload): u32 LE
//! ```
//!
//! The payload holds trainable parameters and batch-norm running statistics
//! in layer order; the header lists every tensor with its shape.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{parameter_names, CnnModel, Geometry, CONV_DROPOUT, HIDDEN_DROPOUT};
use super::task::TaskKind;
use super::train::TrainConfig;
use crate::datasets::SplitSpec;
use crate::error::{Error, Result};
use crate::features::NormalizePolicy;
use crate::nn::{BatchNormState, Scalar, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SPMC";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    task: TaskKind,
    class_map: Vec<String>,
    geometry: Geometry,
    conv_dropout: f64,
    hidden_dropout: f64,
    normalization: NormalizePolicy,
    seed: u64,
    train_config: Option<TrainConfig>,
    split: Option<SplitSpec>,
    tensors: Vec<TensorEntry>,
}

/// Tensors in payload order: each conv block's four parameters followed by
/// its running mean and variance, then the dense layers.
fn layout<T: Scalar>(model: &CnnModel<T>) -> Vec<(TensorEntry, Vec<T>)> {
    let names = parameter_names();
    let mut out = Vec::new();
    for (k, p) in model.params.iter().enumerate() {
        out.push((
            TensorEntry {
                name: names[k].clone(),
                shape: p.shape().to_vec(),
                trainable: true,
            },
            p.data().to_vec(),
        ));
        if k < 12 && k % 4 == 3 {
            let b = k / 4;
            let st = &model.batchnorm[b];
            for (suffix, v) in [
                ("running_mean", &st.running_mean),
                ("running_var", &st.running_var),
            ] {
                out.push((
                    TensorEntry {
                        name: format!("block{}.bn.{suffix}", b + 1),
                        shape: vec![v.len()],
                        trainable: false,
                    },
                    v.clone(),
                ));
            }
        }
    }
    out
}

pub fn encode_checkpoint<T: Scalar>(model: &CnnModel<T>) -> Result<Vec<u8>> {
    let tensors = layout(model);
    let header = Header {
        task: model.task,
        class_map: model.class_map.clone(),
        geometry: model.geometry.clone(),
        conv_dropout: CONV_DROPOUT,
        hidden_dropout: HIDDEN_DROPOUT,
        normalization: model.normalization,
        seed: model.seed,
        train_config: model.train_config.clone(),
        split: model.split.clone(),
        tensors: tensors.iter().map(|(e, _)| e.clone()).collect(),
    };
    let json =
        serde_json::to_vec(&header).map_err(|e| Error::Format(format!("header encoding: {e}")))?;
    let mut payload = Vec::new();
    for (_, data) in &tensors {
        for v in data {
            payload.extend_from_slice(&v.to_f32().expect("finite scalar").to_le_bytes());
        }
    }
    let mut out = Vec::with_capacity(14 + json.len() + payload.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    Ok(out)
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<CnnModel<T>> {
    if bytes.len() < 10 {
        return Err(Error::Corruption(format!(
            "file too short ({} bytes)",
            bytes.len()
        )));
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let header_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let body = &bytes[10..];
    if body.len() < header_len {
        return Err(Error::Corruption("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&body[..header_len])
        .map_err(|e| Error::Corruption(format!("unreadable header: {e}")))?;
    let rest = &body[header_len..];
    let floats: usize = header
        .tensors
        .iter()
        .map(|t| t.shape.iter().product::<usize>())
        .sum();
    if rest.len() != floats * 4 + 4 {
        return Err(Error::Corruption(format!(
            "payload holds {} bytes, header declares {}",
            rest.len(),
            floats * 4 + 4
        )));
    }
    let (payload, crc) = rest.split_at(floats * 4);
    if crc32fast::hash(payload).to_le_bytes() != crc {
        return Err(Error::Corruption("payload checksum mismatch".into()));
    }

    let expected_geometry = Geometry::standard();
    if header.geometry != expected_geometry {
        return Err(Error::Format(
            "checkpoint geometry differs from the supported architecture".into(),
        ));
    }
    if header.class_map.len() != header.task.class_count() {
        return Err(Error::Format(format!(
            "class map has {} entries, task {} needs {}",
            header.class_map.len(),
            header.task,
            header.task.class_count()
        )));
    }

    // rebuild against the architecture and check every tensor matches
    let mut model = super::model::build_model::<T>(header.task, header.seed);
    let reference: Vec<TensorEntry> = layout(&model).into_iter().map(|(e, _)| e).collect();
    if reference != header.tensors {
        return Err(Error::Format(
            "tensor table does not match the architecture".into(),
        ));
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64));
    let mut take = |n: usize| -> Vec<T> { values.by_ref().take(n).collect() };
    let mut params = Vec::new();
    let mut bn = Vec::new();
    let mut k = 0;
    while k < header.tensors.len() {
        let e = &header.tensors[k];
        let n = e.shape.iter().product();
        if e.trainable {
            params.push(Tensor::new(&e.shape, take(n))?);
            k += 1;
        } else {
            let mean = take(n);
            let var = take(header.tensors[k + 1].shape.iter().product());
            bn.push(BatchNormState {
                running_mean: mean,
                running_var: var,
            });
            k += 2;
        }
    }
    model.params = params;
    model.batchnorm = bn;
    model.class_map = header.class_map;
    model.normalization = header.normalization;
    model.train_config = header.train_config;
    model.split = header.split;
    Ok(model)
}

/// Writes atomically: a sibling temp file is renamed over `path`.
pub fn save_checkpoint<T: Scalar>(model: &CnnModel<T>, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(model)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<CnnModel<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
