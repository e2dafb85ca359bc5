//! Task-oriented grasp selection by simulated outcome comparison.

pub mod affordance;
pub mod dmp;
pub mod error;
pub mod harness;
pub mod perception;
pub mod simulate;
pub mod world;

pub use affordance::{
    assess, calibrate_delta, confidence, deploy, kl_divergence, one_shot_rank, select_grasp,
    ConfidenceReport, DeployMode, DeployOptions, Deployment, Library, RankedTransform, TaskRecord,
};
pub use dmp::{fit_dmp, rollout, DmpPolicy, Trajectory};
pub use error::{Error, Result};
pub use perception::PerceptionConfig;
pub use simulate::{
    forward_simulate, ground_truth_success, signature, Label, OutcomeSignature, RolloutResult,
    SignatureWindow, SimConfig,
};
pub use world::{builtin_object, builtin_objects, GraspCandidate, ObjectModel, Pose2, Region, Scene, Task};
