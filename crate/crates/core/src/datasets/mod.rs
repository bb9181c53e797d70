//! Labeled IQ recordings, class-balanced window sampling, and splits.

mod labels;
mod manifest;
mod recording;
mod sampling;

pub use labels::{Protocol, Transmitter};
pub use manifest::{DatasetManifest, ManifestEntry};
pub use recording::{
    decode_iq, encode_iq, import_directory_layout, ingest_recording, list_recordings, load_corpus,
    sidecar_path, write_recording, ImportDefaults, IqRecording, RecordingMeta,
};
pub use sampling::{
    build_split, class_counts, encode_label, sample_windows, split_dataset, DatasetSplit,
    LabeledWindow, SplitPolicy, SplitSpec,
};
