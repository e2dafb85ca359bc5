//! Shared fixtures for the pipeline benchmarks.

use taskgrasp::harness::{experiment, standard_scene, ExperimentConfig};
use taskgrasp::{builtin_object, Library, Scene, Task};

/// Library trained on the default demonstrations.
pub fn trained_library() -> Library {
    experiment::train(&ExperimentConfig::default())
        .expect("default training")
        .library
}

/// A transfer scene on a builtin object.
pub fn scene(object: &str, task: Task, seed: u64) -> Scene {
    standard_scene(&builtin_object(object).expect("builtin object"), task, seed)
}
