//! Scenes, scripted demonstrations on the training mug, and library building.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::affordance::{Library, RecordOptions, WINDOW_PAD};
use crate::dmp::{fit_dmp, Trajectory, DEFAULT_BASIS_COUNT, DEFAULT_DT};
use crate::error::{Error, Result};
use crate::perception::derive_seed;
use crate::simulate::{
    action_region_trajectory, forward_simulate, ground_truth_success, replay, Label,
    RolloutResult, SignatureWindow, SimConfig,
};
use crate::world::{
    builtin_object, GraspCandidate, ObjectModel, Pose2, Region, RegionKind, Scene, Task,
    TRAINING_OBJECT,
};

/// Largest horizontal displacement of an object from the origin.
pub const PLACEMENT_JITTER: f64 = 0.01;

pub const POUR_DURATION: f64 = 4.0;
pub const SHAKE_DURATION: f64 = 4.0;
pub const HANDOVER_DURATION: f64 = 3.0;

/// Rotation applied to the held object while pouring.
pub const POUR_ROTATION: f64 = 1.8;
pub const SHAKE_AMPLITUDE: f64 = 0.25;
/// Net rotation at the end of a shake, so the rotation channel has a goal.
pub const SHAKE_SETTLE: f64 = 0.05;

const POUR_GOAL: [f64; 2] = [-0.08, 0.24];
const SHAKE_GOAL: [f64; 2] = [-0.02, 0.20];
const HANDOVER_GOAL: [f64; 2] = [0.25, 0.25];

/// Handle heights of the successful training grasps.
const HANDLE_HEIGHTS: [f64; 6] = [0.05, 0.035, 0.065, 0.04, 0.06, 0.045];
/// Endpoint offsets of the successful demonstrations.
const GOAL_OFFSETS: [[f64; 2]; 6] = [
    [0.0, 0.0],
    [0.03, -0.02],
    [-0.03, 0.02],
    [0.02, 0.03],
    [-0.02, -0.03],
    [0.04, 0.01],
];
/// Timing scale of the main motion phase of successful demonstrations.
const PACE: [f64; 6] = [1.0, 0.95, 1.05, 0.97, 1.03, 1.0];

pub fn target_region(task: Task) -> Region {
    let (c, h) = match task {
        Task::Pour => ([-0.13, 0.22], [0.07, 0.10]),
        Task::Shake => ([-0.02, 0.20], [0.10, 0.10]),
        Task::Handover => ([0.19, 0.25], [0.05, 0.05]),
    };
    Region::new(Pose2::new(c[0], c[1], 0.0), h, RegionKind::Action)
}

/// The object resting upright near the origin, offset by a seeded jitter.
pub fn standard_scene(object: &ObjectModel, task: Task, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("scene/{}", object.id)));
    let dx = rng.random_range(-PLACEMENT_JITTER..=PLACEMENT_JITTER);
    Scene {
        object: object.clone(),
        object_pose: Pose2::new(dx, 0.0, 0.0),
        target_region: target_region(task),
        rng_seed: seed,
    }
}

fn min_jerk(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
}

fn lerp(a: f64, b: f64, s: f64) -> f64 {
    a + (b - a) * s
}

pub fn task_duration(task: Task) -> f64 {
    match task {
        Task::Pour => POUR_DURATION,
        Task::Shake => SHAKE_DURATION,
        Task::Handover => HANDOVER_DURATION,
    }
}

/// Scripted end-effector motion for a task from `start`.
///
/// `goal_offset` shifts the carrying endpoint and `pace` stretches the main
/// motion phase; `(0, 0)` and `1.0` give the canonical motion.
pub fn scripted_motion(task: Task, start: &Pose2, goal_offset: [f64; 2], pace: f64) -> Result<Trajectory> {
    if !(pace > 0.5 && pace < 1.5) {
        return Err(Error::Validation(format!("pace {pace} outside (0.5, 1.5)")));
    }
    let t_end = task_duration(task);
    let n = (t_end / DEFAULT_DT).round() as usize + 1;
    let th0 = start.theta;
    let poses = (0..n).map(|k| {
        let t = k as f64 * DEFAULT_DT;
        let u = t / t_end;
        let (goal, move_end) = match task {
            Task::Pour => (POUR_GOAL, 0.45),
            Task::Shake => (SHAKE_GOAL, 0.35),
            Task::Handover => (HANDOVER_GOAL, 1.0),
        };
        let gx = goal[0] + goal_offset[0];
        let gz = goal[1] + goal_offset[1];
        let s = min_jerk(u / (move_end * pace).min(1.0));
        let x = lerp(start.x, gx, s);
        let z = lerp(start.z, gz, s);
        let theta = match task {
            Task::Pour => {
                let a = 0.40 * pace;
                let b = a + 0.35 * pace;
                th0 + POUR_ROTATION * min_jerk((u - a) / (b - a))
            }
            Task::Shake => {
                let a = 0.35;
                let v = ((u - a) / (0.9 - a)).clamp(0.0, 1.0);
                let envelope = (PI * v).sin();
                th0 + SHAKE_AMPLITUDE * envelope * (2.0 * PI * 2.0 * v / pace).sin()
                    + SHAKE_SETTLE * min_jerk((u - a) / (1.0 - a))
            }
            Task::Handover => th0,
        };
        Pose2::new(x, z, theta)
    });
    Trajectory::from_poses(poses, 0.0, DEFAULT_DT)
}

/// Composition of a demonstration set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoMix {
    pub successful: usize,
    pub undesired: usize,
}

impl Default for DemoMix {
    fn default() -> Self {
        Self {
            successful: 6,
            undesired: 3,
        }
    }
}

impl DemoMix {
    pub fn count(&self) -> usize {
        self.successful + self.undesired
    }

    pub fn validate(&self) -> Result<()> {
        if self.successful == 0 || self.undesired == 0 {
            return Err(Error::Validation("demo mix needs at least one of each label".into()));
        }
        Ok(())
    }
}

/// One labelled demonstration.
#[derive(Clone, Debug, PartialEq)]
pub struct DemoBundle {
    pub task: Task,
    pub grasp: GraspCandidate,
    pub trajectory: Trajectory,
    pub label: Label,
    pub scene: Scene,
}

impl DemoBundle {
    pub fn replay(&self, cfg: &SimConfig) -> Result<RolloutResult> {
        replay(self.trajectory.clone(), &self.grasp, &self.scene, self.task, cfg)
    }
}

fn handle_grasp(i: usize) -> GraspCandidate {
    GraspCandidate {
        pose_on_object: Pose2::new(0.065, HANDLE_HEIGHTS[i % HANDLE_HEIGHTS.len()], PI),
        score: 1.0,
        index: i,
    }
}

/// Grasps that put the mug in the wrong orientation for the task: the outer
/// left wall, the rim, and the top of the handle.
fn poor_grasp(i: usize) -> GraspCandidate {
    let k = i / 3;
    let dz = 0.01 * k as f64;
    let pose = match i % 3 {
        0 => Pose2::new(-0.04, 0.06 - dz, 0.0),
        1 => Pose2::new(-0.01 + dz, 0.10, -PI / 2.0),
        _ => Pose2::new(0.05, 0.08, -PI / 2.0),
    };
    GraspCandidate {
        pose_on_object: pose,
        score: 1.0,
        index: i,
    }
}

/// Labelled demonstrations on the training mug. Successful variants grasp the
/// handle and perturb the endpoint and pacing; undesired variants execute the
/// task motion from a poor grasp. Labels come from the physics oracle.
pub fn gen_demos(task: Task, mix: DemoMix, seed: u64, cfg: &SimConfig) -> Result<Vec<DemoBundle>> {
    mix.validate()?;
    let mug = builtin_object(TRAINING_OBJECT)?;
    let scene_for = |i: usize| standard_scene(&mug, task, derive_seed(seed, &format!("demo/{task}/{i}")));
    let label = |traj: &Trajectory, grasp: &GraspCandidate, scene: &Scene| -> Result<Label> {
        let r = replay(traj.clone(), grasp, scene, task, cfg)?;
        ground_truth_success(&r, task, scene, cfg)
    };

    let mut out = Vec::with_capacity(mix.count());
    for i in 0..mix.successful {
        let scene = scene_for(i);
        let grasp = handle_grasp(i);
        let start = scene.object_pose.compose(&grasp.pose_on_object);
        let j = i % GOAL_OFFSETS.len();
        let trajectory = scripted_motion(task, &start, GOAL_OFFSETS[j], PACE[j])?;
        let label = label(&trajectory, &grasp, &scene)?;
        out.push(DemoBundle {
            task,
            grasp,
            trajectory,
            label,
            scene,
        });
    }

    let policy = fit_dmp(&out[0].trajectory, DEFAULT_BASIS_COUNT)?;
    for i in 0..mix.undesired {
        let scene = scene_for(mix.successful + i);
        let grasp = poor_grasp(i);
        let trajectory = forward_simulate(&policy, &grasp, &scene, task, cfg)?.ee_traj;
        let label = label(&trajectory, &grasp, &scene)?;
        out.push(DemoBundle {
            task,
            grasp,
            trajectory,
            label,
            scene,
        });
    }
    Ok(out)
}

/// Mean distance between action-region centre and grasp over the successful
/// demonstrations.
pub fn demo_mean_d_h(demos: &[DemoBundle]) -> Result<f64> {
    let ds = demos
        .iter()
        .filter(|d| d.label.is_success())
        .map(|d| {
            let region = d.scene.object.action_region(d.task)?;
            Ok(crate::world::d_h(&region.center, &d.grasp.pose_on_object))
        })
        .collect::<Result<Vec<f64>>>()?;
    if ds.is_empty() {
        return Err(Error::Validation("no successful demonstrations".into()));
    }
    Ok(ds.iter().sum::<f64>() / ds.len() as f64)
}

/// Builds a library from labelled demonstrations. The signature window of
/// each task bounds the action-region traces of its successful demonstrations.
pub fn build_library(demos: &BTreeMap<Task, Vec<DemoBundle>>, opts: &RecordOptions) -> Result<Library> {
    let mut lib = Library::new();
    for (task, bundles) in demos {
        let traces = bundles
            .iter()
            .filter(|b| b.label.is_success())
            .map(|b| {
                let region = b.scene.object.action_region(*task)?.center;
                Ok(action_region_trajectory(&b.trajectory, &b.grasp.pose_on_object, &region))
            })
            .collect::<Result<Vec<_>>>()?;
        lib.preset_windows
            .insert(*task, SignatureWindow::bounding(&traces, WINDOW_PAD)?);
        let (good, bad): (Vec<&DemoBundle>, Vec<&DemoBundle>) =
            bundles.iter().partition(|b| b.label.is_success());
        for b in good.into_iter().chain(bad) {
            lib.record_demonstration(*task, &b.trajectory, &b.scene, &b.grasp, b.label, opts)?;
        }
        lib.finalize_task(*task)?;
    }
    Ok(lib)
}

/// Default demonstration set for every task.
pub fn default_demos(tasks: &[Task], seed: u64, cfg: &SimConfig) -> Result<BTreeMap<Task, Vec<DemoBundle>>> {
    tasks
        .iter()
        .map(|t| Ok((*t, gen_demos(*t, DemoMix::default(), seed, cfg)?)))
        .collect()
}
