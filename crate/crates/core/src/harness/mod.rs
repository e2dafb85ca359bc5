//! Scenarios, scripted demonstrations and experiment drivers.

pub mod config;
pub mod experiment;
pub mod report;
pub mod scenario;

pub use config::{resolve_object, ExperimentConfig};
pub use experiment::{compare, rejection, similarity, train, CompareReport, RejectionReport, SimilarityReport, Trained};
pub use report::{read_trials, write_trials, Strategy, TrialRecord, TRIAL_SCHEMA_VERSION};
pub use scenario::{
    build_library, default_demos, demo_mean_d_h, gen_demos, standard_scene, target_region,
    DemoBundle, DemoMix,
};
