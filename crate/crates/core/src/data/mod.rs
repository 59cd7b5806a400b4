//! Datasets, normalization, the NPY container and checkpoints.

mod checkpoint;
mod dataset;
mod manifest;
mod normalize;
mod npy;

pub use checkpoint::{
    load_checkpoint, precision_name, read_checkpoint_manifest, read_model_config, save_checkpoint, write_model_config,
    CHECKPOINT_FORMAT,
};
pub use dataset::{build_dataset, BuildReport, DatasetBundle, DatasetConfig, ResampleEvent, Split, Target, DATASET_FORMAT};
pub use manifest::Manifest;
pub use normalize::{FieldStats, NormStats};
pub use npy::{from_npy_bytes, read_npy, read_npy_exact, to_npy_bytes, write_npy, NpyArray, NpyHeader};
