//! Dataset ingestion, PNG encoding and the synthetic scene generator.

mod manifest;
mod png;
mod synthetic;

pub use manifest::{
    load_dataset, CameraManifest, DatasetIndex, DatasetView, ManifestView, Split, TrainingView, INFRARED_DIR, MANIFEST_FILE,
    VISIBLE_DIR,
};
pub use png::{decode_png, encode_png, first_channel, read_image, read_image_rgb, write_image, BitDepth};
pub use synthetic::{generate_synthetic, generate_synthetic_with, synthetic_ground_truth, SyntheticConfig, SyntheticScene};
