//! Planar world: poses in the vertical (x, z) plane, object models and scenes.
//!
//! Angles are measured from the +x axis towards +z, so a positive rotation
//! tips an upward-facing opening towards -x.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CONTAINMENT_TOL: f64 = 1e-9;
/// How far an annotated grasp region may extend past the part bounds, so that
/// faces on the boundary survive small detection offsets.
pub const GRASP_REGION_MARGIN: f64 = 0.02;

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let r = theta.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// The representative of `theta` closest to `reference`.
pub fn unwrap_near(theta: f64, reference: f64) -> f64 {
    reference + wrap_angle(theta - reference)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Pour,
    Shake,
    Handover,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Pour, Task::Shake, Task::Handover];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Pour => "pour",
            Task::Shake => "shake",
            Task::Handover => "handover",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pour" => Ok(Task::Pour),
            "shake" => Ok(Task::Shake),
            "handover" => Ok(Task::Handover),
            other => Err(Error::UnknownTask(other.to_string())),
        }
    }
}

/// Rigid transform in the vertical plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub z: f64,
    pub theta: f64,
}

impl Default for Pose2 {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 {
        x: 0.0,
        z: 0.0,
        theta: 0.0,
    };

    pub fn new(x: f64, z: f64, theta: f64) -> Self {
        Self {
            x,
            z,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.z]
    }

    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            self.x + c * other.x - s * other.z,
            self.z + s * other.x + c * other.z,
            self.theta + other.theta,
        )
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            -(c * self.x + s * self.z),
            s * self.x - c * self.z,
            -self.theta,
        )
    }

    /// Maps a point expressed in this frame into the parent frame.
    pub fn transform_point(&self, p: [f64; 2]) -> [f64; 2] {
        let r = rotate(p, self.theta);
        [r[0] + self.x, r[1] + self.z]
    }

    pub fn transform_vector(&self, v: [f64; 2]) -> [f64; 2] {
        rotate(v, self.theta)
    }
}

pub(crate) fn rotate(v: [f64; 2], theta: f64) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Rigid composition `a ∘ b`.
pub fn compose(a: &Pose2, b: &Pose2) -> Pose2 {
    a.compose(b)
}

pub fn invert(p: &Pose2) -> Pose2 {
    p.inverse()
}

/// Euclidean distance between an action-region centre and a grasp pose,
/// over position only.
pub fn d_h(action_region_center: &Pose2, grasp_pose: &Pose2) -> f64 {
    (action_region_center.x - grasp_pose.x).hypot(action_region_center.z - grasp_pose.z)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionKind {
    GraspAffordance,
    Action,
}

/// Oriented rectangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub center: Pose2,
    pub half_extents: [f64; 2],
    pub label: RegionKind,
}

impl Region {
    pub fn new(center: Pose2, half_extents: [f64; 2], label: RegionKind) -> Self {
        Self {
            center,
            half_extents,
            label,
        }
    }

    /// Axis-aligned region from coordinate bounds.
    pub fn from_bounds(x: [f64; 2], z: [f64; 2], label: RegionKind) -> Self {
        Self::new(
            Pose2::new(0.5 * (x[0] + x[1]), 0.5 * (z[0] + z[1]), 0.0),
            [0.5 * (x[1] - x[0]), 0.5 * (z[1] - z[0])],
            label,
        )
    }

    pub fn diagonal(&self) -> f64 {
        2.0 * self.half_extents[0].hypot(self.half_extents[1])
    }

    pub fn to_local(&self, p: [f64; 2]) -> [f64; 2] {
        rotate([p[0] - self.center.x, p[1] - self.center.z], -self.center.theta)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let l = self.to_local(p);
        l[0].abs() <= self.half_extents[0] + CONTAINMENT_TOL
            && l[1].abs() <= self.half_extents[1] + CONTAINMENT_TOL
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        let [hx, hz] = self.half_extents;
        [[-hx, -hz], [hx, -hz], [hx, hz], [-hx, hz]].map(|c| self.center.transform_point(c))
    }

    /// The same region expressed in the parent frame of `frame`.
    pub fn transformed(&self, frame: &Pose2) -> Region {
        Region {
            center: frame.compose(&self.center),
            half_extents: self.half_extents,
            label: self.label,
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.half_extents[0] > 0.0 && self.half_extents[1] > 0.0) {
            return Err(Error::Validation(format!(
                "{what}: half extents must be strictly positive"
            )));
        }
        Ok(())
    }
}

/// Convex polygon with an out-of-plane thickness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Part {
    /// Counter-clockwise vertices in the object frame.
    pub vertices: Vec<[f64; 2]>,
    pub depth: f64,
}

/// A polygon edge with its outward unit normal.
#[derive(Clone, Copy, Debug)]
pub struct Edge {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub normal: [f64; 2],
}

impl Edge {
    pub fn length(&self) -> f64 {
        (self.end[0] - self.start[0]).hypot(self.end[1] - self.start[1])
    }

    pub fn tangent(&self) -> [f64; 2] {
        let l = self.length();
        [
            (self.end[0] - self.start[0]) / l,
            (self.end[1] - self.start[1]) / l,
        ]
    }

    pub fn point_at(&self, u: f64) -> [f64; 2] {
        [
            self.start[0] + u * (self.end[0] - self.start[0]),
            self.start[1] + u * (self.end[1] - self.start[1]),
        ]
    }
}

impl Part {
    pub fn rect(x: [f64; 2], z: [f64; 2], depth: f64) -> Self {
        Self {
            vertices: vec![[x[0], z[0]], [x[1], z[0]], [x[1], z[1]], [x[0], z[1]]],
            depth,
        }
    }

    pub fn bbox(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| {
            let start = self.vertices[i];
            let end = self.vertices[(i + 1) % n];
            let (dx, dz) = (end[0] - start[0], end[1] - start[1]);
            let l = dx.hypot(dz);
            Edge {
                start,
                end,
                normal: [dz / l, -dx / l],
            }
        })
    }

    /// Extent of the polygon along a unit direction.
    pub fn extent_along(&self, dir: [f64; 2]) -> f64 {
        let (lo, hi) = self
            .vertices
            .iter()
            .map(|v| v[0] * dir[0] + v[1] * dir[1])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p), hi.max(p))
            });
        hi - lo
    }

    /// Strict interior test with a small inward margin.
    pub fn strictly_contains(&self, p: [f64; 2], margin: f64) -> bool {
        self.edges().all(|e| {
            let rel = [p[0] - e.start[0], p[1] - e.start[1]];
            rel[0] * e.normal[0] + rel[1] * e.normal[1] < -margin
        })
    }

    fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
            * 0.5
    }

    fn is_convex_ccw(&self) -> bool {
        let n = self.vertices.len();
        n >= 3
            && self.signed_area() > 0.0
            && (0..n).all(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                let c = self.vertices[(i + 2) % n];
                let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
                cross >= -1e-15
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectModel {
    pub id: String,
    pub parts: Vec<Part>,
    pub grasp_region: Region,
    pub action_regions: BTreeMap<Task, Region>,
    pub content_capacity: f64,
    pub opening_direction: [f64; 2],
}

impl ObjectModel {
    pub fn affords(&self, task: Task) -> bool {
        self.action_regions.contains_key(&task)
    }

    pub fn action_region(&self, task: Task) -> Result<&Region> {
        self.action_regions.get(&task).ok_or_else(|| Error::NotAfforded {
            object: self.id.clone(),
            task,
        })
    }

    pub fn bbox(&self) -> ([f64; 2], [f64; 2]) {
        self.parts.iter().map(Part::bbox).fold(
            ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]),
            |(lo, hi), (l, h)| {
                (
                    [lo[0].min(l[0]), lo[1].min(l[1])],
                    [hi[0].max(h[0]), hi[1].max(h[1])],
                )
            },
        )
    }

    /// Point through which content leaves the object: the pour action region
    /// centre, or the top centre of the bounding box when pouring is not afforded.
    pub fn opening_point(&self) -> [f64; 2] {
        match self.action_regions.get(&Task::Pour) {
            Some(r) => r.center.position(),
            None => {
                let (lo, hi) = self.bbox();
                [0.5 * (lo[0] + hi[0]), hi[1]]
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(format!("object `{}`: {msg}", self.id)));
        if self.parts.is_empty() {
            return bad("no parts".into());
        }
        for (i, p) in self.parts.iter().enumerate() {
            if !p.is_convex_ccw() {
                return bad(format!("part {i} is not a counter-clockwise convex polygon"));
            }
            if !(p.depth > 0.0) {
                return bad(format!("part {i} has non-positive depth"));
            }
        }
        if !(0.0..=1.0).contains(&self.content_capacity) {
            return bad("content_capacity outside [0, 1]".into());
        }
        let n = self.opening_direction[0].hypot(self.opening_direction[1]);
        if (n - 1.0).abs() > 1e-9 {
            return bad("opening_direction is not a unit vector".into());
        }
        let (lo, hi) = self.bbox();
        let inside_by = |r: &Region, m: f64| {
            let m = m + CONTAINMENT_TOL;
            r.corners().iter().all(|c| {
                c[0] >= lo[0] - m && c[0] <= hi[0] + m && c[1] >= lo[1] - m && c[1] <= hi[1] + m
            })
        };
        let inside = |r: &Region| inside_by(r, 0.0);
        self.grasp_region.validate("grasp region")?;
        if !inside_by(&self.grasp_region, GRASP_REGION_MARGIN) {
            return bad("grasp region leaves the part bounds".into());
        }
        for (task, r) in &self.action_regions {
            r.validate(&format!("{task} action region"))?;
            if !inside(r) {
                return bad(format!("{task} action region leaves the part bounds"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let obj: ObjectModel = serde_json::from_str(s)?;
        obj.validate()?;
        Ok(obj)
    }
}

/// An object resting in the world with a task target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub object: ObjectModel,
    pub object_pose: Pose2,
    pub target_region: Region,
    pub rng_seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspCandidate {
    pub pose_on_object: Pose2,
    pub score: f64,
    pub index: usize,
}

/// Identifier of the object the task library is trained on.
pub const TRAINING_OBJECT: &str = "mug";

fn regions(
    grasp: ([f64; 2], [f64; 2]),
    pour: ([f64; 2], [f64; 2]),
    shake: ([f64; 2], [f64; 2]),
    handover: ([f64; 2], [f64; 2]),
) -> (Region, BTreeMap<Task, Region>) {
    let action = |(x, z): ([f64; 2], [f64; 2])| Region::from_bounds(x, z, RegionKind::Action);
    let map = BTreeMap::from([
        (Task::Pour, action(pour)),
        (Task::Shake, action(shake)),
        (Task::Handover, action(handover)),
    ]);
    (
        Region::from_bounds(grasp.0, grasp.1, RegionKind::GraspAffordance),
        map,
    )
}

fn object(id: &str, parts: Vec<Part>, regions: (Region, BTreeMap<Task, Region>)) -> ObjectModel {
    ObjectModel {
        id: id.to_string(),
        parts,
        grasp_region: regions.0,
        action_regions: regions.1,
        content_capacity: 1.0,
        opening_direction: [0.0, 1.0],
    }
}

/// Parametric stand-ins for a small household test set. The first entry is
/// the training mug.
pub fn builtin_objects() -> Vec<ObjectModel> {
    vec![
        object(
            "mug",
            vec![
                Part::rect([-0.04, 0.04], [0.0, 0.10], 0.08),
                Part::rect([0.035, 0.065], [0.02, 0.08], 0.015),
            ],
            regions(
                ([-0.055, 0.08], [0.005, 0.115]),
                ([-0.035, 0.035], [0.09, 0.10]),
                ([-0.03, 0.03], [0.025, 0.095]),
                ([-0.04, 0.04], [0.0, 0.10]),
            ),
        ),
        object(
            "travel_mug",
            vec![
                Part::rect([-0.0375, 0.0375], [0.0, 0.16], 0.075),
                Part::rect([0.0325, 0.06], [0.05, 0.11], 0.015),
            ],
            regions(
                ([-0.0525, 0.075], [0.015, 0.175]),
                ([-0.03, 0.03], [0.15, 0.16]),
                ([-0.03, 0.03], [0.03, 0.15]),
                ([-0.0375, 0.0375], [0.0, 0.16]),
            ),
        ),
        object(
            "measuring_spoon",
            vec![
                Part::rect([-0.03, 0.01], [0.0, 0.025], 0.04),
                Part::rect([0.005, 0.07], [0.015, 0.025], 0.012),
            ],
            regions(
                ([-0.005, 0.085], [0.0, 0.04]),
                ([-0.028, 0.008], [0.019, 0.025]),
                ([-0.03, 0.01], [0.0, 0.025]),
                ([-0.03, 0.01], [0.0, 0.025]),
            ),
        ),
        object(
            "glass",
            vec![Part::rect([-0.035, 0.035], [0.0, 0.12], 0.07)],
            regions(
                ([-0.05, 0.05], [0.005, 0.125]),
                ([-0.03, 0.03], [0.11, 0.12]),
                ([-0.03, 0.03], [0.005, 0.115]),
                ([-0.035, 0.035], [0.0, 0.12]),
            ),
        ),
        object(
            "bowl",
            vec![Part {
                vertices: vec![
                    [-0.045, 0.0],
                    [0.045, 0.0],
                    [0.068, 0.012],
                    [0.075, 0.025],
                    [0.075, 0.05],
                    [-0.075, 0.05],
                    [-0.075, 0.025],
                    [-0.068, 0.012],
                ],
                depth: 0.15,
            }],
            regions(
                ([-0.09, 0.09], [-0.01, 0.065]),
                ([-0.06, 0.06], [0.04, 0.05]),
                ([-0.065, 0.065], [0.005, 0.045]),
                ([-0.075, 0.075], [0.0, 0.05]),
            ),
        ),
        object(
            "ashtray",
            vec![Part::rect([-0.06, 0.06], [0.0, 0.025], 0.12)],
            regions(
                ([-0.075, 0.075], [-0.015, 0.04]),
                ([-0.05, 0.05], [0.015, 0.025]),
                ([-0.05, 0.05], [0.0, 0.025]),
                ([-0.06, 0.06], [0.0, 0.025]),
            ),
        ),
    ]
}

pub fn builtin_object(id: &str) -> Result<ObjectModel> {
    builtin_objects()
        .into_iter()
        .find(|o| o.id == id)
        .ok_or_else(|| Error::UnknownObject(id.to_string()))
}
