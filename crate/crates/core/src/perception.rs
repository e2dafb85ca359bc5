//! Oracle perception: annotated regions with Gaussian detection noise, and a
//! geometric grasp proposer over part boundaries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::world::{GraspCandidate, ObjectModel, Pose2, Region, Task};

/// Widest opening of the parallel gripper, metres.
pub const MAX_APERTURE: f64 = 0.08;

/// Approaches whose direction points upward more than this are from below
/// the object and are not generated.
const MAX_APPROACH_RISE: f64 = 0.5;
const SAMPLE_SPACING: f64 = 0.012;
const MIN_SUPPORT: f64 = 1e-4;
const OCCLUSION_MARGIN: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptionConfig {
    pub noise_sigma_pos: f64,
    pub noise_sigma_theta: f64,
    pub proposals_per_object: usize,
    pub rng_seed: u64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            noise_sigma_pos: 0.005,
            noise_sigma_theta: 0.02,
            proposals_per_object: 10,
            rng_seed: 0,
        }
    }
}

impl PerceptionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma_pos >= 0.0 && self.noise_sigma_theta >= 0.0) {
            return Err(Error::Validation("perception noise sigmas must be >= 0".into()));
        }
        if self.proposals_per_object < 3 {
            return Err(Error::Validation("proposals_per_object must be >= 3".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, rng_seed: u64) -> Self {
        Self {
            rng_seed,
            ..self.clone()
        }
    }
}

/// Seed derived from a base seed and a textual salt, stable across platforms.
pub fn derive_seed(seed: u64, salt: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(salt.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma)
        .expect("sigma validated non-negative and finite")
        .sample(rng)
}

/// The object's grasp affordance region with its centre perturbed by the
/// configured detection noise.
pub fn detect_grasp_affordance_region(
    object: &ObjectModel,
    task: Task,
    cfg: &PerceptionConfig,
) -> Result<Region> {
    cfg.validate()?;
    if !object.affords(task) {
        return Err(Error::NotAfforded {
            object: object.id.clone(),
            task,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        cfg.rng_seed,
        &format!("detect/{}/{task}", object.id),
    ));
    let mut region = object.grasp_region.clone();
    let c = region.center;
    region.center = Pose2::new(
        c.x + gaussian(&mut rng, cfg.noise_sigma_pos),
        c.z + gaussian(&mut rng, cfg.noise_sigma_pos),
        c.theta + gaussian(&mut rng, cfg.noise_sigma_theta),
    );
    Ok(region)
}

/// Annotated action region for the task. Exact: this is the measurement channel.
pub fn segment_action_region(object: &ObjectModel, task: Task) -> Result<Region> {
    object.action_region(task).cloned()
}

/// A boundary stretch that a grasp can be placed on.
#[derive(Clone, Debug)]
struct GraspableEdge {
    part: usize,
    edge: usize,
    start: [f64; 2],
    end: [f64; 2],
    theta: f64,
    support: f64,
}

/// Parameter interval of segment `a + u (b - a)` inside the region.
fn clip_to_region(region: &Region, a: [f64; 2], b: [f64; 2]) -> Option<(f64, f64)> {
    let la = region.to_local(a);
    let lb = region.to_local(b);
    let (mut u0, mut u1) = (0.0f64, 1.0f64);
    for k in 0..2 {
        let h = region.half_extents[k] + 1e-9;
        let d = lb[k] - la[k];
        if d.abs() < 1e-15 {
            if la[k].abs() > h {
                return None;
            }
            continue;
        }
        let (mut t0, mut t1) = ((-h - la[k]) / d, (h - la[k]) / d);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        u0 = u0.max(t0);
        u1 = u1.min(t1);
    }
    (u1 > u0).then_some((u0, u1))
}

fn occluded(object: &ObjectModel, own: usize, p: [f64; 2]) -> bool {
    object
        .parts
        .iter()
        .enumerate()
        .any(|(i, part)| i != own && part.strictly_contains(p, OCCLUSION_MARGIN))
}

fn graspable_edges(object: &ObjectModel, region: &Region) -> Vec<GraspableEdge> {
    let mut out = Vec::new();
    for (pi, part) in object.parts.iter().enumerate() {
        for (ei, edge) in part.edges().enumerate() {
            let approach = [-edge.normal[0], -edge.normal[1]];
            if approach[1] > MAX_APPROACH_RISE {
                continue;
            }
            let width = part.extent_along(edge.tangent()).min(part.depth);
            if width > MAX_APERTURE + 1e-12 {
                continue;
            }
            let Some((u0, u1)) = clip_to_region(region, edge.start, edge.end) else {
                continue;
            };
            let start = edge.point_at(u0);
            let end = edge.point_at(u1);
            let len = (u1 - u0) * edge.length();
            const PROBES: usize = 200;
            let free = (0..PROBES)
                .filter(|&k| {
                    let u = (k as f64 + 0.5) / PROBES as f64;
                    let p = [
                        start[0] + u * (end[0] - start[0]),
                        start[1] + u * (end[1] - start[1]),
                    ];
                    !occluded(object, pi, p)
                })
                .count();
            let support = len * free as f64 / PROBES as f64;
            if support < MIN_SUPPORT {
                continue;
            }
            out.push(GraspableEdge {
                part: pi,
                edge: ei,
                start,
                end,
                theta: approach[1].atan2(approach[0]),
                support,
            });
        }
    }
    out
}

/// Grasp proposals on part boundaries inside `region`, best supported first.
///
/// Each graspable boundary stretch (pinch width within the gripper aperture,
/// not approached from below, not buried in another part) is sampled at
/// jittered even spacing. Stretches are visited round-robin in order of
/// support so the batch covers every stretch before doubling up. Scores are
/// the stretch's support length normalised by the longest one.
pub fn propose_grasp_candidates(
    object: &ObjectModel,
    region: &Region,
    cfg: &PerceptionConfig,
) -> Vec<GraspCandidate> {
    let mut edges = graspable_edges(object, region);
    let Some(max_support) = edges.iter().map(|e| e.support).reduce(f64::max) else {
        return Vec::new();
    };
    edges.sort_by(|a, b| {
        b.support
            .total_cmp(&a.support)
            .then(a.part.cmp(&b.part))
            .then(a.edge.cmp(&b.edge))
    });

    let samples: Vec<Vec<GraspCandidate>> = edges
        .iter()
        .map(|e| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                cfg.rng_seed,
                &format!("propose/{}/{}/{}", object.id, e.part, e.edge),
            ));
            let m = ((e.support / SAMPLE_SPACING).floor() as usize).max(1);
            let score = e.support / max_support;
            (0..m)
                .filter_map(|k| {
                    let jitter: f64 = rng.random_range(-0.35..0.35);
                    let u = (k as f64 + 0.5 + jitter) / m as f64;
                    let p = [
                        e.start[0] + u * (e.end[0] - e.start[0]),
                        e.start[1] + u * (e.end[1] - e.start[1]),
                    ];
                    (!occluded(object, e.part, p) && region.contains(p)).then(|| GraspCandidate {
                        pose_on_object: Pose2::new(p[0], p[1], e.theta),
                        score,
                        index: 0,
                    })
                })
                .collect()
        })
        .collect();

    let mut picked = Vec::with_capacity(cfg.proposals_per_object);
    let rounds = samples.iter().map(Vec::len).max().unwrap_or(0);
    'fill: for round in 0..rounds {
        for edge_samples in &samples {
            if let Some(c) = edge_samples.get(round) {
                if picked.len() == cfg.proposals_per_object {
                    break 'fill;
                }
                picked.push(*c);
            }
        }
    }
    picked.sort_by(|a, b| b.score.total_cmp(&a.score));
    for (i, c) in picked.iter_mut().enumerate() {
        c.index = i;
    }
    picked
}
