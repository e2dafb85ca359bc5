//! Task-affordance library and outcome-based grasp assessment.
//!
//! A library maps each task to a policy, the outcome signatures of its
//! successful demonstrations, and the grasp transforms that produced them.
//! Candidates are scored by forward-simulating the policy from the grasp and
//! measuring how close the simulated outcome comes to any stored one.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dmp::{fit_dmp, DmpPolicy, Trajectory, DEFAULT_BASIS_COUNT};
use crate::error::{Error, Result};
use crate::perception::{
    detect_grasp_affordance_region, propose_grasp_candidates, segment_action_region,
    PerceptionConfig,
};
use crate::simulate::{
    action_region_trajectory, forward_simulate, signature, Label, OutcomeSignature, SignatureWindow,
    SimConfig,
};
use crate::world::{wrap_angle, GraspCandidate, Pose2, Region, Scene, Task};

/// Divergences below this are treated as this, bounding confidence at 1e9.
pub const EPS_CAP: f64 = 1e-9;
pub const DEFAULT_W_THETA: f64 = 0.1;
pub const LIBRARY_VERSION: &str = "taskgrasp-library/1";
/// Padding, as a fraction of the demonstrated extent on each side, applied
/// when deriving a signature window. Coarse bins let outcomes of differently
/// sized objects share support with the training demonstrations.
pub const WINDOW_PAD: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedTransform {
    /// Grasp pose relative to the grasp-region centre; translation divided by
    /// the region diagonal.
    pub relative_pose: Pose2,
    pub confidence: f64,
    pub source_outcome_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task: Task,
    pub policy: DmpPolicy,
    pub outcomes: Vec<OutcomeSignature>,
    pub ranked_transforms: Vec<RankedTransform>,
    pub histogram_window: SignatureWindow,
    /// Undesired demonstration outcomes; calibration input only.
    #[serde(skip)]
    pub undesired: Vec<OutcomeSignature>,
}

impl TaskRecord {
    fn outcome_id(task: Task, i: usize) -> String {
        format!("{task}-{i}")
    }

    fn outcome_index(&self, id: &str) -> Option<usize> {
        (0..self.outcomes.len()).find(|&i| Self::outcome_id(self.task, i) == id)
    }

    /// Confidence of each stored outcome against all the others.
    fn leave_one_out(&self) -> Result<Vec<f64>> {
        (0..self.outcomes.len())
            .map(|i| {
                let others: Vec<&OutcomeSignature> = self
                    .outcomes
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, o)| o)
                    .collect();
                if others.is_empty() {
                    Ok(1.0 / EPS_CAP)
                } else {
                    Ok(divergence_report(&self.outcomes[i], others)?.1)
                }
            })
            .collect()
    }

    /// Recomputes transform confidences against the current outcome set and
    /// re-sorts them, best first.
    pub fn refresh_rankings(&mut self) -> Result<()> {
        let loo = self.leave_one_out()?;
        let indices: Vec<Option<usize>> = self
            .ranked_transforms
            .iter()
            .map(|t| self.outcome_index(&t.source_outcome_id))
            .collect();
        for (t, idx) in self.ranked_transforms.iter_mut().zip(indices) {
            if let Some(i) = idx {
                t.confidence = loo[i];
            }
        }
        self.ranked_transforms
            .sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        Ok(())
    }

    /// Calibration samples: leave-one-out confidences for stored successes,
    /// full-library confidences for undesired outcomes.
    pub fn calibration_samples(&self) -> Result<Vec<(f64, Label)>> {
        let mut out: Vec<(f64, Label)> = self
            .leave_one_out()?
            .into_iter()
            .map(|c| (c, Label::Successful))
            .collect();
        for u in &self.undesired {
            out.push((confidence(u, self)?, Label::Undesired));
        }
        Ok(out)
    }

    fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        if self
            .ranked_transforms
            .windows(2)
            .any(|w| w[0].confidence < w[1].confidence)
        {
            return Err(Error::Validation(format!(
                "{}: ranked transforms not sorted",
                self.task
            )));
        }
        if self.ranked_transforms.iter().any(|t| !(t.confidence > 0.0)) {
            return Err(Error::Validation(format!(
                "{}: transform confidence must be positive",
                self.task
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Library {
    pub version: String,
    pub records: BTreeMap<Task, TaskRecord>,
    pub delta: BTreeMap<Task, f64>,
    /// Signature windows to use when a task record is first created.
    pub preset_windows: BTreeMap<Task, SignatureWindow>,
    pending_undesired: BTreeMap<Task, Vec<Trajectory>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    pub candidate_index: usize,
    pub divergences: Vec<f64>,
    pub confidence: f64,
    pub passed: bool,
}

/// `D(alpha || alpha_bar)` with the natural logarithm.
pub fn kl_divergence(alpha: &OutcomeSignature, alpha_bar: &OutcomeSignature) -> Result<f64> {
    if alpha.len() != alpha_bar.len() {
        return Err(Error::MismatchedBins {
            left: alpha.len(),
            right: alpha_bar.len(),
        });
    }
    let mut d = 0.0;
    for (&a, &b) in alpha.bins.iter().zip(&alpha_bar.bins) {
        if a > 0.0 {
            if !(b > 0.0) {
                return Err(Error::Validation(
                    "divergence undefined: reference mass on an empty bin".into(),
                ));
            }
            d += a * (a / b).ln();
        }
    }
    Ok(d.max(0.0))
}

fn divergence_report<'a>(
    simulated: &OutcomeSignature,
    outcomes: impl IntoIterator<Item = &'a OutcomeSignature>,
) -> Result<(Vec<f64>, f64)> {
    let divergences = outcomes
        .into_iter()
        .map(|a| kl_divergence(a, simulated))
        .collect::<Result<Vec<_>>>()?;
    let conf = divergences
        .iter()
        .map(|d| 1.0 / d.max(EPS_CAP))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((divergences, conf))
}

/// Highest inverse divergence between the candidate outcome and any stored one.
pub fn confidence(candidate_signature: &OutcomeSignature, record: &TaskRecord) -> Result<f64> {
    Ok(assess(candidate_signature, record, 0, f64::INFINITY)?.confidence)
}

/// Full confidence report for a simulated outcome.
pub fn assess(
    candidate_signature: &OutcomeSignature,
    record: &TaskRecord,
    candidate_index: usize,
    delta: f64,
) -> Result<ConfidenceReport> {
    if record.outcomes.is_empty() {
        return Err(Error::EmptyOutcomes(record.task));
    }
    let (divergences, confidence) = divergence_report(candidate_signature, &record.outcomes)?;
    Ok(ConfidenceReport {
        candidate_index,
        divergences,
        confidence,
        passed: confidence > delta,
    })
}

/// Candidate with maximal confidence above `delta`; ties go to the lowest index.
pub fn select_grasp(reports: &[ConfidenceReport], delta: f64) -> Option<usize> {
    reports
        .iter()
        .filter(|r| r.confidence > delta)
        .min_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then(a.candidate_index.cmp(&b.candidate_index))
        })
        .map(|r| r.candidate_index)
}

/// One-dimensional threshold classifier over confidence (`C > delta` predicts
/// success) maximising balanced accuracy. The threshold sits midway between
/// the two neighbouring confidences it separates; among equally accurate
/// thresholds the largest wins.
pub fn calibrate_delta(labeled: &[(f64, Label)]) -> Result<f64> {
    let pos = labeled.iter().filter(|(_, l)| l.is_success()).count();
    let neg = labeled.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut values: Vec<f64> = labeled.iter().map(|(c, _)| *c).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    if values.len() == 1 {
        return Ok(values[0]);
    }
    let balanced = |delta: f64| {
        let tp = labeled
            .iter()
            .filter(|(c, l)| l.is_success() && *c > delta)
            .count();
        let tn = labeled
            .iter()
            .filter(|(c, l)| !l.is_success() && *c <= delta)
            .count();
        0.5 * (tp as f64 / pos as f64 + tn as f64 / neg as f64)
    };
    let mut best = (f64::NEG_INFINITY, 0.0);
    for w in values.windows(2) {
        let delta = 0.5 * (w[0] + w[1]);
        let acc = balanced(delta);
        if acc >= best.0 {
            best = (acc, delta);
        }
    }
    Ok(best.1)
}

/// Grasp pose relative to the grasp-region centre, translation normalised by
/// the region diagonal.
pub fn normalized_relative_pose(grasp: &Pose2, g_star: &Region) -> Pose2 {
    let rel = g_star.center.inverse().compose(grasp);
    let diag = g_star.diagonal();
    Pose2::new(rel.x / diag, rel.z / diag, rel.theta)
}

pub fn transform_distance(a: &Pose2, b: &Pose2, w_theta: f64) -> f64 {
    let dth = wrap_angle(a.theta - b.theta);
    ((a.x - b.x).powi(2) + (a.z - b.z).powi(2) + w_theta * dth * dth).sqrt()
}

/// Orders candidates by resemblance to the stored successful transforms:
/// each candidate's key is its best (distance, -confidence) pair over the
/// stored transforms; ties fall back to candidate index.
pub fn one_shot_rank(
    candidates: &[GraspCandidate],
    g_star: &Region,
    record: &TaskRecord,
    w_theta: f64,
) -> Result<Vec<usize>> {
    if record.ranked_transforms.is_empty() {
        return Err(Error::EmptyTransforms(record.task));
    }
    let mut keyed: Vec<(f64, f64, usize)> = candidates
        .iter()
        .map(|c| {
            let rel = normalized_relative_pose(&c.pose_on_object, g_star);
            let (d, negc) = record
                .ranked_transforms
                .iter()
                .map(|t| (transform_distance(&rel, &t.relative_pose, w_theta), -t.confidence))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)))
                .expect("non-empty transforms");
            (d, negc, c.index)
        })
        .collect();
    keyed.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    Ok(keyed.into_iter().map(|k| k.2).collect())
}

/// Options for recording demonstrations.
#[derive(Clone, Debug)]
pub struct RecordOptions {
    pub basis_count: usize,
    pub sim: SimConfig,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self {
            basis_count: DEFAULT_BASIS_COUNT,
            sim: SimConfig::default(),
        }
    }
}

impl Library {
    pub fn new() -> Self {
        Self {
            version: LIBRARY_VERSION.to_string(),
            ..Self::default()
        }
    }

    pub fn record(&self, task: Task) -> Result<&TaskRecord> {
        self.records.get(&task).ok_or(Error::MissingTask(task))
    }

    pub fn delta(&self, task: Task) -> Result<f64> {
        self.delta.get(&task).copied().ok_or(Error::MissingTask(task))
    }

    /// Adds one labelled demonstration.
    ///
    /// The first successful demonstration of a task fits its policy and
    /// creates the record. Successful demonstrations add an outcome and a
    /// grasp transform; undesired ones are kept only for calibration.
    pub fn record_demonstration(
        &mut self,
        task: Task,
        demo: &Trajectory,
        scene: &Scene,
        grasp_used: &GraspCandidate,
        label: Label,
        opts: &RecordOptions,
    ) -> Result<()> {
        demo.validate()?;
        let region = scene.object.action_region(task)?.center;
        let trace = action_region_trajectory(demo, &grasp_used.pose_on_object, &region);

        if !self.records.contains_key(&task) {
            if !label.is_success() {
                self.pending_undesired.entry(task).or_default().push(trace);
                return Ok(());
            }
            let window = match self.preset_windows.get(&task) {
                Some(w) => *w,
                None => SignatureWindow::bounding([&trace], WINDOW_PAD)?,
            };
            let policy = fit_dmp(demo, opts.basis_count)?;
            let mut record = TaskRecord {
                task,
                policy,
                outcomes: Vec::new(),
                ranked_transforms: Vec::new(),
                histogram_window: window,
                undesired: Vec::new(),
            };
            for pending in self.pending_undesired.remove(&task).unwrap_or_default() {
                record.undesired.push(signature(&pending, &window, &opts.sim)?);
            }
            self.records.insert(task, record);
        }

        let record = self.records.get_mut(&task).expect("record ensured above");
        let sig = signature(&trace, &record.histogram_window, &opts.sim)?;
        if !label.is_success() {
            record.undesired.push(sig);
            return Ok(());
        }
        let conf = if record.outcomes.is_empty() {
            1.0 / EPS_CAP
        } else {
            divergence_report(&sig, &record.outcomes)?.1
        };
        let id = TaskRecord::outcome_id(task, record.outcomes.len());
        record.outcomes.push(sig);
        record.ranked_transforms.push(RankedTransform {
            relative_pose: normalized_relative_pose(
                &grasp_used.pose_on_object,
                &scene.object.grasp_region,
            ),
            confidence: conf,
            source_outcome_id: id,
        });
        record
            .ranked_transforms
            .sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        Ok(())
    }

    /// Re-ranks stored transforms and fits the confidence threshold.
    pub fn finalize_task(&mut self, task: Task) -> Result<f64> {
        let record = self.records.get_mut(&task).ok_or(Error::MissingTask(task))?;
        record.refresh_rankings()?;
        let delta = calibrate_delta(&record.calibration_samples()?)?;
        if !(delta > 0.0) {
            return Err(Error::Validation(format!("{task}: calibrated threshold {delta} not positive")));
        }
        self.delta.insert(task, delta);
        Ok(delta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != LIBRARY_VERSION {
            return Err(Error::UnsupportedVersion(self.version.clone()));
        }
        for (task, record) in &self.records {
            record.validate()?;
            match self.delta.get(task) {
                Some(d) if *d > 0.0 => {}
                _ => {
                    return Err(Error::Validation(format!(
                        "{task}: missing or non-positive threshold"
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let tasks = self
            .records
            .iter()
            .map(|(task, r)| {
                (
                    *task,
                    TaskEntryRef {
                        policy: &r.policy,
                        outcomes: &r.outcomes,
                        ranked_transforms: &r.ranked_transforms,
                        histogram_window: &r.histogram_window,
                        delta: self.delta.get(task).copied().unwrap_or(0.0),
                    },
                )
            })
            .collect();
        let file = LibraryFileRef {
            version: &self.version,
            tasks,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let probe: serde_json::Value = serde_json::from_str(s)?;
        match probe.get("version").and_then(|v| v.as_str()) {
            Some(LIBRARY_VERSION) => {}
            Some(other) => return Err(Error::UnsupportedVersion(other.to_string())),
            None => return Err(Error::Validation("library version missing".into())),
        }
        let file: LibraryFile = serde_json::from_value(probe)?;
        let mut lib = Library::new();
        for (task, entry) in file.tasks {
            lib.delta.insert(task, entry.delta);
            lib.records.insert(
                task,
                TaskRecord {
                    task,
                    policy: entry.policy,
                    outcomes: entry.outcomes,
                    ranked_transforms: entry.ranked_transforms,
                    histogram_window: entry.histogram_window,
                    undesired: Vec::new(),
                },
            );
        }
        lib.validate()?;
        Ok(lib)
    }
}

#[derive(Serialize)]
struct TaskEntryRef<'a> {
    policy: &'a DmpPolicy,
    outcomes: &'a [OutcomeSignature],
    ranked_transforms: &'a [RankedTransform],
    histogram_window: &'a SignatureWindow,
    delta: f64,
}

#[derive(Serialize)]
struct LibraryFileRef<'a> {
    version: &'a str,
    tasks: BTreeMap<Task, TaskEntryRef<'a>>,
}

#[derive(Deserialize)]
struct TaskEntry {
    policy: DmpPolicy,
    outcomes: Vec<OutcomeSignature>,
    ranked_transforms: Vec<RankedTransform>,
    histogram_window: SignatureWindow,
    delta: f64,
}

#[derive(Deserialize)]
struct LibraryFile {
    #[allow(dead_code)]
    version: String,
    tasks: BTreeMap<Task, TaskEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DeployMode {
    /// Simulate in ranked order and stop at the first candidate above threshold.
    #[default]
    OneShot,
    /// Simulate every candidate and pick the most confident one above threshold.
    Exhaustive,
}

#[derive(Clone, Debug)]
pub struct DeployOptions {
    pub mode: DeployMode,
    pub w_theta: f64,
}

impl Default for DeployOptions {
    fn default() -> Self {
        Self {
            mode: DeployMode::OneShot,
            w_theta: DEFAULT_W_THETA,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Deployment {
    pub g_star: Region,
    pub action_region: Region,
    pub candidates: Vec<GraspCandidate>,
    /// Candidate indices in the order they were (or would be) simulated.
    pub order: Vec<usize>,
    /// Reports for simulated candidates, in simulation order.
    pub reports: Vec<ConfidenceReport>,
    pub selected: Option<(GraspCandidate, ConfidenceReport)>,
    pub simulations: usize,
}

impl Deployment {
    pub fn selected_grasp(&self) -> Option<&GraspCandidate> {
        self.selected.as_ref().map(|(g, _)| g)
    }
}

/// Detects the grasp region, proposes and ranks candidates against the
/// library's transforms, then simulates them in order until one clears the
/// task threshold.
pub fn deploy(
    scene: &Scene,
    task: Task,
    library: &Library,
    perception_cfg: &PerceptionConfig,
    sim_cfg: &SimConfig,
    opts: &DeployOptions,
) -> Result<Deployment> {
    let record = library.record(task)?;
    let delta = library.delta(task)?;
    let g_star = detect_grasp_affordance_region(&scene.object, task, perception_cfg)?;
    let action_region = segment_action_region(&scene.object, task)?;
    let candidates = propose_grasp_candidates(&scene.object, &g_star, perception_cfg);
    let order = one_shot_rank(&candidates, &g_star, record, opts.w_theta)?;

    let mut reports = Vec::new();
    let mut selected = None;
    for &idx in &order {
        let cand = &candidates[idx];
        let result = forward_simulate(&record.policy, cand, scene, task, sim_cfg)?;
        let sig = signature(&result.action_region_traj, &record.histogram_window, sim_cfg)?;
        let report = assess(&sig, record, idx, delta)?;
        let passed = report.passed;
        reports.push(report);
        if opts.mode == DeployMode::OneShot && passed {
            selected = Some((*cand, reports.last().cloned().expect("just pushed")));
            break;
        }
    }
    if opts.mode == DeployMode::Exhaustive {
        selected = select_grasp(&reports, delta).map(|i| {
            let report = reports
                .iter()
                .find(|r| r.candidate_index == i)
                .cloned()
                .expect("selected from reports");
            (candidates[i], report)
        });
    }
    Ok(Deployment {
        g_star,
        action_region,
        candidates,
        order,
        simulations: reports.len(),
        reports,
        selected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(p: &[f64]) -> OutcomeSignature {
        OutcomeSignature {
            shape: [p.len(), 1, 1],
            bins: p.to_vec(),
        }
    }

    fn report(i: usize, c: f64) -> ConfidenceReport {
        ConfidenceReport {
            candidate_index: i,
            divergences: vec![1.0 / c],
            confidence: c,
            passed: false,
        }
    }

    fn record_with(outcomes: Vec<OutcomeSignature>) -> TaskRecord {
        TaskRecord {
            task: Task::Pour,
            policy: DmpPolicy::zero(25, Pose2::IDENTITY, Pose2::new(1.0, 1.0, 0.0), 1.0),
            outcomes,
            ranked_transforms: Vec::new(),
            histogram_window: SignatureWindow {
                x: [0.0, 1.0],
                z: [0.0, 1.0],
                theta: [0.0, 1.0],
            },
            undesired: Vec::new(),
        }
    }

    #[test]
    fn kl_known_values() {
        let a = sig(&[0.5, 0.5]);
        assert_eq!(kl_divergence(&a, &a).unwrap(), 0.0);
        let d = kl_divergence(&a, &sig(&[0.9, 0.1])).unwrap();
        assert!((d - 0.510_825_623_765_990_7).abs() < 1e-12, "{d}");
        assert!(matches!(
            kl_divergence(&a, &sig(&[0.2, 0.3, 0.5])),
            Err(Error::MismatchedBins { .. })
        ));
    }

    #[test]
    fn confidence_caps_and_inverts() {
        let a = sig(&[0.5, 0.5]);
        let rec = record_with(vec![a.clone(), sig(&[0.9, 0.1])]);
        assert_eq!(confidence(&a, &rec).unwrap(), 1.0 / EPS_CAP);
        assert!(matches!(
            confidence(&a, &record_with(vec![])),
            Err(Error::EmptyOutcomes(_))
        ));
    }

    #[test]
    fn confidence_is_max_inverse_divergence() {
        let cand = sig(&[0.5, 0.5]);
        let near = sig(&[0.6, 0.4]);
        let far = sig(&[0.9, 0.1]);
        let rec = record_with(vec![far.clone(), near.clone()]);
        let r = assess(&cand, &rec, 3, 0.0).unwrap();
        let d_near = kl_divergence(&near, &cand).unwrap();
        assert_eq!(r.divergences.len(), 2);
        assert_eq!(r.confidence, 1.0 / d_near);
        assert!(r.passed);
        assert_eq!(r.candidate_index, 3);
    }

    #[test]
    fn selection_rules() {
        let r = vec![report(0, 4.0), report(1, 2.0), report(2, 5.0)];
        assert_eq!(select_grasp(&r, 3.0), Some(2));
        assert_eq!(select_grasp(&r, 5.0), None);
        let tie = vec![report(1, 5.0), report(0, 5.0)];
        assert_eq!(select_grasp(&tie, 1.0), Some(0));
        assert_eq!(select_grasp(&[], 1.0), None);
    }

    #[test]
    fn calibration_midpoint() {
        use Label::*;
        let d = calibrate_delta(&[
            (0.9, Successful),
            (0.8, Successful),
            (0.3, Undesired),
            (0.2, Undesired),
        ])
        .unwrap();
        assert!((d - 0.55).abs() < 1e-12);
        assert!(matches!(
            calibrate_delta(&[(0.9, Successful), (0.3, Successful)]),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn calibration_prefers_largest_among_ties() {
        use Label::*;
        // overlapping classes: thresholds 0.45 and 0.65 both reach 0.75
        let d = calibrate_delta(&[
            (0.9, Successful),
            (0.5, Successful),
            (0.6, Undesired),
            (0.1, Undesired),
        ])
        .unwrap();
        assert!((d - 0.75).abs() < 1e-12, "{d}");
    }

    #[test]
    fn one_shot_orders_by_distance() {
        let g = Region::from_bounds([-0.05, 0.05], [0.0, 0.1], crate::world::RegionKind::GraspAffordance);
        let mut rec = record_with(vec![sig(&[0.5, 0.5])]);
        rec.ranked_transforms.push(RankedTransform {
            relative_pose: Pose2::new(0.0, 0.0, 0.0),
            confidence: 1.0,
            source_outcome_id: "pour-0".into(),
        });
        let diag = g.diagonal();
        let c = |i, dx: f64| GraspCandidate {
            pose_on_object: g.center.compose(&Pose2::new(dx * diag, 0.0, 0.0)),
            score: 0.5,
            index: i,
        };
        let order = one_shot_rank(&[c(0, 0.5), c(1, 0.1)], &g, &rec, DEFAULT_W_THETA).unwrap();
        assert_eq!(order, vec![1, 0]);
        let exact = one_shot_rank(&[c(0, 0.3), c(1, 0.0), c(2, 0.1)], &g, &rec, DEFAULT_W_THETA).unwrap();
        assert_eq!(exact[0], 1);
        rec.ranked_transforms.clear();
        assert!(matches!(
            one_shot_rank(&[c(0, 0.0)], &g, &rec, DEFAULT_W_THETA),
            Err(Error::EmptyTransforms(_))
        ));
    }

    #[test]
    fn unknown_library_version_rejected() {
        let lib = Library::new();
        let json = lib.to_json().unwrap().replace(LIBRARY_VERSION, "taskgrasp-library/99");
        assert!(matches!(Library::from_json(&json), Err(Error::UnsupportedVersion(_))));
        assert!(Library::from_json(r#"{"tasks":{}}"#).is_err());
    }

    fn distribution(n: usize) -> impl Strategy<Value = OutcomeSignature> {
        proptest::collection::vec(0.0..1.0f64, n)
            .prop_map(move |w| OutcomeSignature::from_weights([n, 1, 1], &{
                let mut w = w;
                w[0] += 1e-3;
                w
            }).unwrap())
    }

    proptest! {
        #[test]
        fn kl_is_non_negative(a in distribution(16), b in distribution(16)) {
            prop_assert!(kl_divergence(&a, &b).unwrap() >= 0.0);
            prop_assert_eq!(kl_divergence(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn selection_is_permutation_invariant(
            confs in proptest::collection::vec(0.0..10.0f64, 1..12),
            delta in 0.0..10.0f64,
            seed in any::<u64>(),
        ) {
            let reports: Vec<_> = confs.iter().enumerate().map(|(i, c)| report(i, *c)).collect();
            let mut shuffled = reports.clone();
            // deterministic shuffle from the seed
            let n = shuffled.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(select_grasp(&reports, delta), select_grasp(&shuffled, delta));
        }

        #[test]
        fn raising_delta_shrinks_acceptance(
            confs in proptest::collection::vec(0.0..10.0f64, 1..12),
            d1 in 0.0..10.0f64,
            bump in 0.0..5.0f64,
        ) {
            let d2 = d1 + bump;
            let accepted = |d: f64| confs.iter().enumerate().filter(|(_, c)| **c > d).map(|(i, _)| i).collect::<Vec<_>>();
            let (a1, a2) = (accepted(d1), accepted(d2));
            prop_assert!(a2.iter().all(|i| a1.contains(i)));
        }

        #[test]
        fn confidence_grows_with_outcomes(
            cand in distribution(8), a in distribution(8), b in distribution(8)
        ) {
            let small = record_with(vec![a.clone()]);
            let big = record_with(vec![a, b]);
            prop_assert!(confidence(&cand, &big).unwrap() >= confidence(&cand, &small).unwrap());
        }
    }
}
