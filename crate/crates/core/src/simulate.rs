//! Forward simulation of a task policy executed from a grasp, outcome
//! signatures, and the physics oracle that labels rollouts.

use serde::{Deserialize, Serialize};

use crate::dmp::{rollout, DmpPolicy, Trajectory};
use crate::error::{Error, Result};
use crate::world::{unwrap_near, GraspCandidate, Pose2, Scene, Task};

/// Content drained per second while the opening is tilted past the spill threshold.
pub const DRAIN_RATE: f64 = 1.0;
/// Additive smoothing applied to every signature bin.
pub const SIGNATURE_EPSILON: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub spill_tilt_threshold: f64,
    pub pour_fraction_required: f64,
    pub shake_min_amplitude: f64,
    pub handover_zone_tolerance: f64,
    pub bins_x: usize,
    pub bins_z: usize,
    pub bins_theta: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            spill_tilt_threshold: 0.35,
            pour_fraction_required: 0.8,
            shake_min_amplitude: 0.3,
            handover_zone_tolerance: 0.05,
            bins_x: 8,
            bins_z: 8,
            bins_theta: 8,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.dt,
            self.spill_tilt_threshold,
            self.pour_fraction_required,
            self.shake_min_amplitude,
            self.handover_zone_tolerance,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || self.pour_fraction_required > 1.0 {
            return Err(Error::Validation(
                "simulation parameters must be positive, pour_fraction_required <= 1".into(),
            ));
        }
        if self.bins_x < 4 || self.bins_z < 4 || self.bins_theta < 4 {
            return Err(Error::Validation("signature bin counts must be >= 4".into()));
        }
        Ok(())
    }

    pub fn bin_shape(&self) -> [usize; 3] {
        [self.bins_x, self.bins_z, self.bins_theta]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Successful,
    Undesired,
}

impl Label {
    pub fn from_success(ok: bool) -> Self {
        if ok {
            Label::Successful
        } else {
            Label::Undesired
        }
    }

    pub fn is_success(self) -> bool {
        self == Label::Successful
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    pub ee_traj: Trajectory,
    pub action_region_traj: Trajectory,
    /// Remaining content after each sample, in capacity units.
    pub content_remaining: Vec<f64>,
    /// Content drained into the target region, in capacity units.
    pub delivered_fraction: f64,
    /// Content drained anywhere else.
    pub spilled: f64,
    pub initial_content: f64,
    /// Angle between the opening direction and vertical, per sample.
    pub tilt: Vec<f64>,
}

impl RolloutResult {
    pub fn max_tilt(&self) -> f64 {
        self.tilt.iter().copied().fold(0.0, f64::max)
    }
}

/// Axis-aligned window over (x, z, theta) used to bin action-region states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignatureWindow {
    pub x: [f64; 2],
    pub z: [f64; 2],
    pub theta: [f64; 2],
}

impl SignatureWindow {
    /// Minimum half-width per axis so static dimensions still get a window.
    pub const MIN_HALF: [f64; 3] = [0.02, 0.02, 0.1];

    /// Bounding window of the trajectories, each axis padded by `pad` of its
    /// extent on both sides.
    pub fn bounding<'a>(trajs: impl IntoIterator<Item = &'a Trajectory>, pad: f64) -> Result<Self> {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for tr in trajs {
            let th = tr.unwrapped_theta();
            for (s, t) in tr.samples.iter().zip(th) {
                for (k, v) in [s.pose.x, s.pose.z, t].into_iter().enumerate() {
                    lo[k] = lo[k].min(v);
                    hi[k] = hi[k].max(v);
                }
            }
        }
        if !lo[0].is_finite() {
            return Err(Error::Validation("no trajectories to bound".into()));
        }
        let axis = |k: usize| {
            let c = 0.5 * (lo[k] + hi[k]);
            let half = (0.5 * (hi[k] - lo[k]) * (1.0 + 2.0 * pad)).max(Self::MIN_HALF[k]);
            [c - half, c + half]
        };
        Ok(Self {
            x: axis(0),
            z: axis(1),
            theta: axis(2),
        })
    }

    fn validate(&self) -> Result<()> {
        if [self.x, self.z, self.theta].iter().any(|a| !(a[1] > a[0])) {
            return Err(Error::Validation("signature window needs positive extents".into()));
        }
        Ok(())
    }
}

/// Smoothed discrete distribution over binned action-region states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSignature {
    pub shape: [usize; 3],
    pub bins: Vec<f64>,
}

impl OutcomeSignature {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Builds a signature from raw non-negative weights, applying the standard
    /// smoothing and renormalisation.
    pub fn from_weights(shape: [usize; 3], weights: &[f64]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if weights.len() != n || n == 0 {
            return Err(Error::MismatchedBins {
                left: n,
                right: weights.len(),
            });
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Validation("signature weights must be non-negative with positive sum".into()));
        }
        let norm = 1.0 + n as f64 * SIGNATURE_EPSILON;
        Ok(Self {
            shape,
            bins: weights
                .iter()
                .map(|w| (w / total + SIGNATURE_EPSILON) / norm)
                .collect(),
        })
    }
}

fn bin_index(v: f64, range: [f64; 2], n: usize) -> usize {
    let u = (v - range[0]) / (range[1] - range[0]);
    ((u * n as f64).floor().max(0.0) as usize).min(n - 1)
}

/// Occupancy histogram of the trajectory over the window, clamping
/// out-of-window samples to the edge bins.
pub fn signature(
    traj: &Trajectory,
    window: &SignatureWindow,
    cfg: &SimConfig,
) -> Result<OutcomeSignature> {
    window.validate()?;
    if traj.is_empty() {
        return Err(Error::InvalidTrajectory("empty trajectory".into()));
    }
    let [bx, bz, bt] = cfg.bin_shape();
    let mut counts = vec![0.0; bx * bz * bt];
    let theta_mid = 0.5 * (window.theta[0] + window.theta[1]);
    for s in &traj.samples {
        let i = bin_index(s.pose.x, window.x, bx);
        let j = bin_index(s.pose.z, window.z, bz);
        let k = bin_index(unwrap_near(s.pose.theta, theta_mid), window.theta, bt);
        counts[(i * bz + j) * bt + k] += 1.0;
    }
    OutcomeSignature::from_weights([bx, bz, bt], &counts)
}

/// Action-region poses for an end-effector trajectory with the object held
/// rigidly at `grasp` (grasp pose in the object frame).
pub fn action_region_trajectory(ee: &Trajectory, grasp: &Pose2, region_offset: &Pose2) -> Trajectory {
    let ungrasp = grasp.inverse();
    Trajectory {
        samples: ee
            .samples
            .iter()
            .map(|s| crate::dmp::TimedPose {
                t: s.t,
                pose: s.pose.compose(&ungrasp).compose(region_offset),
            })
            .collect(),
        dt: ee.dt,
    }
}

fn tilt_of(object_pose: &Pose2, opening_direction: [f64; 2]) -> f64 {
    let d = object_pose.transform_vector(opening_direction);
    d[1].clamp(-1.0, 1.0).acos()
}

/// Replays a given end-effector trajectory with the object attached at
/// `grasp`, running the quasi-static content model.
pub fn replay(
    ee_traj: Trajectory,
    grasp: &GraspCandidate,
    scene: &Scene,
    task: Task,
    cfg: &SimConfig,
) -> Result<RolloutResult> {
    let object = &scene.object;
    let region_offset = object.action_region(task)?.center;
    let ungrasp = grasp.pose_on_object.inverse();
    let opening = object.opening_point();
    let initial = object.content_capacity;

    let mut remaining = initial;
    let (mut delivered, mut spilled) = (0.0, 0.0);
    let mut content_remaining = Vec::with_capacity(ee_traj.len());
    let mut tilt = Vec::with_capacity(ee_traj.len());
    let mut region_samples = Vec::with_capacity(ee_traj.len());
    for (k, s) in ee_traj.samples.iter().enumerate() {
        let obj = s.pose.compose(&ungrasp);
        region_samples.push(crate::dmp::TimedPose {
            t: s.t,
            pose: obj.compose(&region_offset),
        });
        let tl = tilt_of(&obj, object.opening_direction);
        tilt.push(tl);
        if k > 0 && tl > cfg.spill_tilt_threshold && remaining > 0.0 {
            let step = s.t - ee_traj.samples[k - 1].t;
            let drained = (DRAIN_RATE * step).min(remaining);
            remaining -= drained;
            // only pouring has a receptacle; anything else that leaves is spilled
            if task == Task::Pour && scene.target_region.contains(obj.transform_point(opening)) {
                delivered += drained;
            } else {
                spilled += drained;
            }
        }
        content_remaining.push(remaining);
    }
    let action_region_traj = Trajectory {
        samples: region_samples,
        dt: ee_traj.dt,
    };
    Ok(RolloutResult {
        ee_traj,
        action_region_traj,
        content_remaining,
        delivered_fraction: delivered,
        spilled,
        initial_content: initial,
        tilt,
    })
}

/// End-effector start for a grasp on the object as it rests in the scene.
pub fn grasp_start(scene: &Scene, grasp: &GraspCandidate) -> Pose2 {
    scene.object_pose.compose(&grasp.pose_on_object)
}

/// Rolls the policy out from the grasp towards the policy's demonstrated goal
/// and replays the result through the content model.
pub fn forward_simulate(
    policy: &DmpPolicy,
    grasp: &GraspCandidate,
    scene: &Scene,
    task: Task,
    cfg: &SimConfig,
) -> Result<RolloutResult> {
    let start = grasp_start(scene, grasp);
    let ee = rollout(policy, &start, &policy.goal_pose(), policy.duration(), cfg.dt)?;
    replay(ee, grasp, scene, task, cfg)
}

/// Peak-to-peak rotation of a trajectory, on unwrapped angles.
pub fn theta_amplitude(traj: &Trajectory) -> f64 {
    let th = traj.unwrapped_theta();
    let (lo, hi) = th
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    hi - lo
}

/// Physics oracle for task success.
pub fn ground_truth_success(
    result: &RolloutResult,
    task: Task,
    scene: &Scene,
    cfg: &SimConfig,
) -> Result<Label> {
    let ok = match task {
        Task::Pour => {
            result.delivered_fraction >= cfg.pour_fraction_required
                && result.spilled <= 1.0 - cfg.pour_fraction_required
        }
        Task::Shake => {
            theta_amplitude(&result.action_region_traj) >= cfg.shake_min_amplitude
                && result.spilled <= 0.0
        }
        Task::Handover => {
            let last = result.action_region_traj.last();
            let target = scene.target_region.center;
            (last.x - target.x).hypot(last.z - target.z) <= cfg.handover_zone_tolerance
                && result.max_tilt() < cfg.spill_tilt_threshold
        }
    };
    Ok(Label::from_success(ok))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmp::{TimedPose, Trajectory};
    use crate::world::{builtin_object, Region, RegionKind};

    fn scene() -> Scene {
        Scene {
            object: builtin_object("mug").unwrap(),
            object_pose: Pose2::IDENTITY,
            target_region: Region::from_bounds([-0.2, -0.05], [0.1, 0.3], RegionKind::Action),
            rng_seed: 0,
        }
    }

    fn line(n: usize, f: impl Fn(f64) -> Pose2) -> Trajectory {
        Trajectory::from_poses((0..n).map(|k| f(k as f64 / (n - 1) as f64)), 0.0, 0.01).unwrap()
    }

    #[test]
    fn identity_grasp_attaches_region_exactly() {
        let sc = scene();
        let grasp = GraspCandidate {
            pose_on_object: Pose2::IDENTITY,
            score: 1.0,
            index: 0,
        };
        let ee = line(50, |u| Pose2::new(0.1 * u, 0.2 * u, 1.5 * u));
        let r = replay(ee.clone(), &grasp, &sc, Task::Pour, &SimConfig::default()).unwrap();
        let off = sc.object.action_region(Task::Pour).unwrap().center;
        for (a, e) in r.action_region_traj.samples.iter().zip(&ee.samples) {
            assert_eq!(a.pose, e.pose.compose(&off));
        }
        assert_eq!(r.action_region_traj.len(), ee.len());
        assert_eq!(r.action_region_traj.dt, ee.dt);
    }

    #[test]
    fn upright_motion_keeps_content() {
        let sc = scene();
        let grasp = GraspCandidate {
            pose_on_object: Pose2::new(0.065, 0.05, std::f64::consts::PI),
            score: 1.0,
            index: 0,
        };
        let ee = line(40, |u| Pose2::new(0.065 + 0.1 * u, 0.05, std::f64::consts::PI + 0.2 * u));
        let r = replay(ee, &grasp, &sc, Task::Pour, &SimConfig::default()).unwrap();
        assert!(r.content_remaining.iter().all(|c| *c == r.initial_content));
        assert_eq!(r.delivered_fraction + r.spilled, 0.0);
    }

    #[test]
    fn content_is_conserved_and_non_increasing() {
        let sc = scene();
        let grasp = GraspCandidate {
            pose_on_object: Pose2::new(0.065, 0.05, std::f64::consts::PI),
            score: 1.0,
            index: 0,
        };
        let ee = line(300, |u| Pose2::new(0.065 - 0.2 * u, 0.05 + 0.2 * u, std::f64::consts::PI + 2.0 * u));
        let r = replay(ee, &grasp, &sc, Task::Pour, &SimConfig::default()).unwrap();
        assert!(r.content_remaining.windows(2).all(|w| w[1] <= w[0]));
        let last = *r.content_remaining.last().unwrap();
        assert!((r.delivered_fraction + r.spilled + last - r.initial_content).abs() < 1e-9);
        assert!(r.delivered_fraction + r.spilled > 0.0);
    }

    #[test]
    fn delta_signature() {
        let cfg = SimConfig::default();
        let tr = line(20, |_| Pose2::new(0.0, 0.0, 0.0));
        let w = SignatureWindow {
            x: [-1.0, 1.0],
            z: [-1.0, 1.0],
            theta: [-1.0, 1.0],
        };
        let sig = signature(&tr, &w, &cfg).unwrap();
        let b = sig.len() as f64;
        let max = sig.bins.iter().copied().fold(0.0, f64::max);
        assert!((max - (1.0 + SIGNATURE_EPSILON) / (1.0 + b * SIGNATURE_EPSILON)).abs() < 1e-15);
        assert!((sig.bins.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let floor = SIGNATURE_EPSILON / (1.0 + b * SIGNATURE_EPSILON);
        assert!(sig.bins.iter().all(|p| *p >= floor * (1.0 - 1e-12)));
        assert_eq!(sig, signature(&tr, &w, &cfg).unwrap());
    }

    #[test]
    fn out_of_window_samples_clamp_to_edges() {
        let cfg = SimConfig::default();
        let w = SignatureWindow {
            x: [0.0, 1.0],
            z: [0.0, 1.0],
            theta: [0.0, 1.0],
        };
        let far = line(12, |_| Pose2::new(50.0, -50.0, 0.5));
        let edge = line(12, |_| Pose2::new(0.999, 0.0, 0.5));
        assert_eq!(signature(&far, &w, &cfg).unwrap(), signature(&edge, &w, &cfg).unwrap());
    }

    #[test]
    fn window_pads_and_floors() {
        let tr = line(20, |u| Pose2::new(u, 0.5, 0.0));
        let w = SignatureWindow::bounding([&tr], 0.1).unwrap();
        assert!((w.x[0] + 0.1).abs() < 1e-12 && (w.x[1] - 1.1).abs() < 1e-12);
        assert!((w.z[1] - w.z[0] - 2.0 * SignatureWindow::MIN_HALF[1]).abs() < 1e-12);
        assert!(w.theta[1] > w.theta[0]);
    }

    #[test]
    fn oracle_cases() {
        let sc = scene();
        let cfg = SimConfig::default();
        let tr = line(20, |_| Pose2::new(0.0, 0.0, 0.0));
        let mut r = RolloutResult {
            ee_traj: tr.clone(),
            action_region_traj: tr.clone(),
            content_remaining: vec![0.0; 20],
            delivered_fraction: 1.0,
            spilled: 0.0,
            initial_content: 1.0,
            tilt: vec![0.0; 20],
        };
        assert_eq!(ground_truth_success(&r, Task::Pour, &sc, &cfg).unwrap(), Label::Successful);
        r.delivered_fraction = 0.5;
        r.spilled = 0.5;
        assert_eq!(ground_truth_success(&r, Task::Pour, &sc, &cfg).unwrap(), Label::Undesired);
        // static: no shake amplitude
        assert_eq!(ground_truth_success(&r, Task::Shake, &sc, &cfg).unwrap(), Label::Undesired);
        // handover ending far from the target centre
        assert_eq!(ground_truth_success(&r, Task::Handover, &sc, &cfg).unwrap(), Label::Undesired);
        let c = sc.target_region.center;
        let at_target = line(20, |_| Pose2::new(c.x, c.z, 0.0));
        r.action_region_traj = at_target;
        assert_eq!(ground_truth_success(&r, Task::Handover, &sc, &cfg).unwrap(), Label::Successful);
        r.tilt[7] = 1.0;
        assert_eq!(ground_truth_success(&r, Task::Handover, &sc, &cfg).unwrap(), Label::Undesired);
    }

    #[test]
    fn shake_amplitude_on_unwrapped_angles() {
        let tr = Trajectory::new(
            (0..20)
                .map(|k| TimedPose {
                    t: k as f64 * 0.01,
                    pose: Pose2::new(0.0, 0.0, std::f64::consts::PI - 0.1 + 0.01 * k as f64),
                })
                .collect(),
            0.01,
        )
        .unwrap();
        assert!((theta_amplitude(&tr) - 0.19).abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let bad = SimConfig {
            bins_theta: 3,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
