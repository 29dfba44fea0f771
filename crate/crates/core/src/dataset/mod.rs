//! Splits, normalization statistics, dihedral augmentation, balanced
//! sampling and the synthetic fixture.

pub mod augment;
pub mod manifest;
pub mod sampler;
pub mod split;
pub mod stats;
pub mod synthetic;

pub use augment::{augment, compose, NUM_TRANSFORMS};
pub use manifest::{scan_patch_store, synthetic_path, BuildOptions, DatasetManifest, SYNTHETIC_SCHEME};
pub use sampler::{balanced_draw, median_class_size};
pub use split::{split_dataset, Granularity, PatchEntry, PatchRecord, Split, DEFAULT_FRACTIONS};
pub use stats::{compute_norm_stats, denormalize, normalize, NormStats, StatsAccumulator, StatsScope};
pub use synthetic::{generate_synthetic, generate_synthetic_with_mask, SyntheticSceneSpec};
