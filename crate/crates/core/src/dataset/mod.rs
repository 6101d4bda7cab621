//! Dataset construction from capture bursts, synthetic scenes and the
//! dataset manifest.

mod build;
mod burst;
mod manifest;
mod synth;

pub use build::{
    build_dataset_from_bursts, level_profile, synthetic_noise_seed, synthetic_scene_spec, write_synthetic_dataset,
    BurstBuildOptions, FileBurst, GainMode, SceneSummary, SyntheticOptions,
};
pub use burst::{
    build_ground_truth, compute_digital_gain, estimate_noise_levels, CaptureBurst, FrameSource,
    GroundTruth, NoiseCondition, NoiseLevel,
};
pub use manifest::{Manifest, ManifestEntry, Role};
pub use synth::{add_awgn, add_mosaic_noise, synthesize_from_fields, synthesize_scene, SceneKind, SceneSpec};
