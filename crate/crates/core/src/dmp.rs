//! Discrete dynamic movement primitives over the (x, z, theta) end-effector state.
//!
//! Each dimension is a critically damped spring towards its goal, perturbed by
//! a forcing term that is a normalised mixture of Gaussian basis functions of
//! a shared exponentially decaying phase. The forcing is scaled by
//! `goal - start`, so rollouts are affine in the displacement.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{unwrap_near, Pose2};

pub const DEFAULT_BASIS_COUNT: usize = 25;
pub const MIN_BASIS_COUNT: usize = 5;
pub const DEFAULT_DT: f64 = 0.01;

const MIN_SAMPLES: usize = 10;
const DEGENERATE_SPAN: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedPose {
    pub t: f64,
    pub pose: Pose2,
}

/// Uniformly sampled pose sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TimedPose>,
    pub dt: f64,
}

impl Trajectory {
    pub fn new(samples: Vec<TimedPose>, dt: f64) -> Result<Self> {
        let traj = Self { samples, dt };
        traj.validate()?;
        Ok(traj)
    }

    /// Samples `poses` at `t0 + k * dt`.
    pub fn from_poses(poses: impl IntoIterator<Item = Pose2>, t0: f64, dt: f64) -> Result<Self> {
        let samples = poses
            .into_iter()
            .enumerate()
            .map(|(k, pose)| TimedPose {
                t: t0 + k as f64 * dt,
                pose,
            })
            .collect();
        Self::new(samples, dt)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidTrajectory(m));
        if self.samples.len() < MIN_SAMPLES {
            return bad(format!(
                "{} samples, need at least {MIN_SAMPLES}",
                self.samples.len()
            ));
        }
        if !(self.dt > 0.0) {
            return bad(format!("non-positive dt {}", self.dt));
        }
        if self.samples[0].t < 0.0 {
            return bad("negative start time".into());
        }
        for (k, w) in self.samples.windows(2).enumerate() {
            let step = w[1].t - w[0].t;
            if step <= 0.0 {
                return bad(format!("time not strictly increasing at sample {}", k + 1));
            }
            if (step - self.dt).abs() > 1e-9 {
                return bad(format!("non-uniform step {step} at sample {}", k + 1));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |l| l.t) - self.samples.first().map_or(0.0, |f| f.t)
    }

    pub fn first(&self) -> &Pose2 {
        &self.samples[0].pose
    }

    pub fn last(&self) -> &Pose2 {
        &self.samples[self.samples.len() - 1].pose
    }

    /// Theta sequence with 2π jumps removed.
    pub fn unwrapped_theta(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.samples.len());
        for s in &self.samples {
            let th = match out.last() {
                Some(&prev) => unwrap_near(s.pose.theta, prev),
                None => s.pose.theta,
            };
            out.push(th);
        }
        out
    }

    /// Per-dimension value series (x, z, unwrapped theta).
    pub fn channels(&self) -> [Vec<f64>; 3] {
        [
            self.samples.iter().map(|s| s.pose.x).collect(),
            self.samples.iter().map(|s| s.pose.z).collect(),
            self.unwrapped_theta(),
        ]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "x", "z", "theta"])?;
        for s in &self.samples {
            wr.write_record([
                s.t.to_string(),
                s.pose.x.to_string(),
                s.pose.z.to_string(),
                s.pose.theta.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "x", "z", "theta"] {
            return Err(Error::InvalidTrajectory(format!(
                "expected header t,x,z,theta, found {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut samples = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let field = |i: usize| -> Result<f64> {
                rec[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidTrajectory(format!("bad number `{}`: {e}", &rec[i])))
            };
            samples.push(TimedPose {
                t: field(0)?,
                pose: Pose2::new(field(1)?, field(2)?, field(3)?),
            });
        }
        if samples.len() < 2 {
            return Err(Error::InvalidTrajectory("fewer than two samples".into()));
        }
        let dt = samples[1].t - samples[0].t;
        Self::new(samples, dt)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub alpha_y: f64,
    pub beta_y: f64,
    pub alpha_s: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self {
            alpha_y: 25.0,
            beta_y: 25.0 / 4.0,
            alpha_s: 8.0,
        }
    }
}

/// One dimension of a fitted primitive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimPolicy {
    pub basis_count: usize,
    pub weights: Vec<f64>,
    pub start_ref: f64,
    pub goal_ref: f64,
    pub gains: Gains,
    pub tau_ref: f64,
    /// Forcing disabled because the demonstration had no net displacement.
    #[serde(default)]
    pub degenerate: bool,
}

/// Basis centres in phase space, evenly spaced in time.
pub fn basis_centers(basis_count: usize, alpha_s: f64) -> Vec<f64> {
    (0..basis_count)
        .map(|i| (-alpha_s * i as f64 / (basis_count - 1) as f64).exp())
        .collect()
}

/// Basis widths: inverse squared spacing to the next centre.
pub fn basis_widths(centers: &[f64]) -> Vec<f64> {
    let n = centers.len();
    (0..n)
        .map(|i| {
            let d = if i + 1 < n {
                centers[i + 1] - centers[i]
            } else {
                centers[i] - centers[i - 1]
            };
            1.0 / (d * d)
        })
        .collect()
}

#[derive(Clone, Debug)]
struct Basis {
    centers: Vec<f64>,
    widths: Vec<f64>,
}

impl Basis {
    fn new(basis_count: usize, alpha_s: f64) -> Self {
        let centers = basis_centers(basis_count, alpha_s);
        let widths = basis_widths(&centers);
        Self { centers, widths }
    }

    fn activations(&self, s: f64, out: &mut [f64]) {
        for ((o, c), h) in out.iter_mut().zip(&self.centers).zip(&self.widths) {
            *o = (-h * (s - c) * (s - c)).exp();
        }
    }
}

impl DimPolicy {
    fn validate(&self) -> Result<()> {
        let g = &self.gains;
        if self.basis_count < MIN_BASIS_COUNT || self.weights.len() != self.basis_count {
            return Err(Error::Validation(format!(
                "policy dimension needs >= {MIN_BASIS_COUNT} bases with one weight each"
            )));
        }
        if !(g.alpha_y > 0.0 && g.beta_y > 0.0 && g.alpha_s > 0.0 && self.tau_ref > 0.0) {
            return Err(Error::Validation("policy gains and tau must be positive".into()));
        }
        if (g.beta_y - g.alpha_y / 4.0).abs() > 1e-12 * g.alpha_y {
            return Err(Error::Validation("beta_y must equal alpha_y / 4".into()));
        }
        Ok(())
    }

    /// Normalised forcing per unit displacement at phase `s`.
    fn shape(&self, basis: &Basis, psi: &mut [f64], s: f64) -> f64 {
        if self.degenerate {
            return 0.0;
        }
        basis.activations(s, psi);
        let (num, den) = psi
            .iter()
            .zip(&self.weights)
            .fold((0.0, 0.0), |(n, d), (p, w)| (n + p * w, d + p));
        if den > 1e-300 {
            num / den * s
        } else {
            0.0
        }
    }
}

/// Task policy over (x, z, theta) with a shared canonical system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DmpPolicy {
    pub dims: [DimPolicy; 3],
}

impl DmpPolicy {
    pub fn validate(&self) -> Result<()> {
        for d in &self.dims {
            d.validate()?;
        }
        let (g, tau) = (self.dims[0].gains, self.dims[0].tau_ref);
        if self.dims.iter().any(|d| d.gains != g || d.tau_ref != tau) {
            return Err(Error::Validation(
                "all dimensions must share gains and tau".into(),
            ));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.dims[0].tau_ref
    }

    pub fn start_pose(&self) -> Pose2 {
        Pose2::new(
            self.dims[0].start_ref,
            self.dims[1].start_ref,
            self.dims[2].start_ref,
        )
    }

    pub fn goal_pose(&self) -> Pose2 {
        Pose2::new(
            self.dims[0].goal_ref,
            self.dims[1].goal_ref,
            self.dims[2].goal_ref,
        )
    }

    pub fn degenerate(&self) -> [bool; 3] {
        [0, 1, 2].map(|k| self.dims[k].degenerate)
    }

    /// A policy with no forcing: pure goal attraction.
    pub fn zero(basis_count: usize, start: Pose2, goal: Pose2, tau: f64) -> Self {
        let dim = |s: f64, g: f64| DimPolicy {
            basis_count,
            weights: vec![0.0; basis_count],
            start_ref: s,
            goal_ref: g,
            gains: Gains::default(),
            tau_ref: tau,
            degenerate: false,
        };
        let goal_theta = unwrap_near(goal.theta, start.theta);
        Self {
            dims: [
                dim(start.x, goal.x),
                dim(start.z, goal.z),
                dim(start.theta, goal_theta),
            ],
        }
    }
}

fn gradient(y: &[f64], dt: f64) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|i| match i {
            0 => (y[1] - y[0]) / dt,
            i if i == n - 1 => (y[n - 1] - y[n - 2]) / dt,
            i => (y[i + 1] - y[i - 1]) / (2.0 * dt),
        })
        .collect()
}

/// Fits a policy to a demonstration by locally weighted regression of the
/// target forcing term on the basis activations.
pub fn fit_dmp(demo: &Trajectory, basis_count: usize) -> Result<DmpPolicy> {
    demo.validate()?;
    if basis_count < MIN_BASIS_COUNT {
        return Err(Error::Validation(format!(
            "basis_count {basis_count} below minimum {MIN_BASIS_COUNT}"
        )));
    }
    let gains = Gains::default();
    let tau = demo.duration();
    let t0 = demo.samples[0].t;
    let phase: Vec<f64> = demo
        .samples
        .iter()
        .map(|s| (-gains.alpha_s * (s.t - t0) / tau).exp())
        .collect();
    let basis = Basis::new(basis_count, gains.alpha_s);
    let mut psi = vec![0.0; basis_count];
    let activations: Vec<Vec<f64>> = phase
        .iter()
        .map(|&s| {
            basis.activations(s, &mut psi);
            psi.clone()
        })
        .collect();

    let dims = demo.channels().map(|y| {
        let (y0, g) = (y[0], y[y.len() - 1]);
        let span = g - y0;
        let degenerate = span.abs() < DEGENERATE_SPAN;
        let weights = if degenerate {
            vec![0.0; basis_count]
        } else {
            let vel = gradient(&y, demo.dt);
            let acc = gradient(&vel, demo.dt);
            let target: Vec<f64> = (0..y.len())
                .map(|k| {
                    tau * tau * acc[k]
                        - gains.alpha_y * (gains.beta_y * (g - y[k]) - tau * vel[k])
                })
                .collect();
            (0..basis_count)
                .map(|i| {
                    let (mut num, mut den) = (0.0, 0.0);
                    for k in 0..y.len() {
                        let xi = phase[k] * span;
                        let p = activations[k][i];
                        num += p * xi * target[k];
                        den += p * xi * xi;
                    }
                    num / (den + 1e-10)
                })
                .collect()
        };
        DimPolicy {
            basis_count,
            weights,
            start_ref: y0,
            goal_ref: g,
            gains,
            tau_ref: tau,
            degenerate,
        }
    });
    Ok(DmpPolicy { dims })
}

/// Rolls the policy out from `start` to `goal` over `duration`.
///
/// Angles are first moved to the representatives closest to the policy's
/// demonstrated start and goal, integrated unwrapped, and wrapped on output.
/// The step is shrunk so that the last sample lands exactly on `duration`.
pub fn rollout(
    policy: &DmpPolicy,
    start: &Pose2,
    goal: &Pose2,
    duration: f64,
    dt: f64,
) -> Result<Trajectory> {
    policy.validate()?;
    if !(duration > 0.0) || !(dt > 0.0) || dt > duration / 10.0 + 1e-12 {
        return Err(Error::Validation(format!(
            "rollout needs duration > 0 and dt in (0, duration/10]; got duration={duration}, dt={dt}"
        )));
    }
    let theta = &policy.dims[2];
    let starts = [
        start.x,
        start.z,
        unwrap_near(start.theta, theta.start_ref),
    ];
    let goals = [goal.x, goal.z, unwrap_near(goal.theta, theta.goal_ref)];
    let values = integrate(policy, starts, goals, duration, dt);
    let h = duration / (values.len() - 1) as f64;
    Trajectory::from_poses(
        values.into_iter().map(|v| Pose2::new(v[0], v[1], v[2])),
        0.0,
        h,
    )
}

/// Fixed-step RK4 integration returning unwrapped per-step states.
pub(crate) fn integrate(
    policy: &DmpPolicy,
    starts: [f64; 3],
    goals: [f64; 3],
    duration: f64,
    dt: f64,
) -> Vec<[f64; 3]> {
    let steps = ((duration / dt) - 1e-9).ceil().max(1.0) as usize;
    let h = duration / steps as f64;
    let gains = policy.dims[0].gains;
    let tau = duration;
    let bases: Vec<Basis> = policy
        .dims
        .iter()
        .map(|d| Basis::new(d.basis_count, d.gains.alpha_s))
        .collect();
    let mut psi = vec![0.0; policy.dims.iter().map(|d| d.basis_count).max().unwrap_or(0)];
    let span = [0, 1, 2].map(|k| goals[k] - starts[k]);

    // state: [y0, v0, y1, v1, y2, v2, s]
    let mut deriv = |st: &[f64; 7]| -> [f64; 7] {
        let s = st[6];
        let mut d = [0.0; 7];
        for k in 0..3 {
            let dim = &policy.dims[k];
            let f = dim.shape(&bases[k], &mut psi[..dim.basis_count], s) * span[k];
            let (y, v) = (st[2 * k], st[2 * k + 1]);
            d[2 * k] = v / tau;
            d[2 * k + 1] = (gains.alpha_y * (gains.beta_y * (goals[k] - y) - v) + f) / tau;
        }
        d[6] = -gains.alpha_s * s / tau;
        d
    };
    let axpy = |a: &[f64; 7], b: &[f64; 7], c: f64| -> [f64; 7] {
        let mut o = *a;
        for i in 0..7 {
            o[i] += c * b[i];
        }
        o
    };

    let mut state = [starts[0], 0.0, starts[1], 0.0, starts[2], 0.0, 1.0];
    let mut out = Vec::with_capacity(steps + 1);
    out.push(starts);
    for _ in 0..steps {
        let k1 = deriv(&state);
        let k2 = deriv(&axpy(&state, &k1, 0.5 * h));
        let k3 = deriv(&axpy(&state, &k2, 0.5 * h));
        let k4 = deriv(&axpy(&state, &k3, h));
        for i in 0..7 {
            state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.push([state[0], state[2], state[4]]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn min_jerk(u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
    }

    fn demo_1d(f: impl Fn(f64) -> f64, duration: f64, dt: f64) -> Trajectory {
        let n = (duration / dt).round() as usize;
        Trajectory::from_poses(
            (0..=n).map(|k| Pose2::new(f(k as f64 * dt / duration), 0.3, 0.1)),
            0.0,
            dt,
        )
        .unwrap()
    }

    #[test]
    fn constant_demo_is_degenerate() {
        let demo = demo_1d(|_| 0.5, 1.0, 0.01);
        let p = fit_dmp(&demo, 25).unwrap();
        assert_eq!(p.degenerate(), [true; 3]);
        assert!(p.dims.iter().all(|d| d.weights.iter().all(|w| *w == 0.0)));
    }

    #[test]
    fn zero_weight_policy_reaches_goal() {
        let p = DmpPolicy::zero(25, Pose2::IDENTITY, Pose2::new(1.0, 0.0, 0.0), 2.0);
        let tr = rollout(&p, &Pose2::IDENTITY, &Pose2::new(1.0, 0.0, 0.0), 2.0, 0.01).unwrap();
        assert!((tr.last().x - 1.0).abs() < 1e-3);
        assert!((tr.samples.last().unwrap().t - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rollout_rejects_bad_steps() {
        let p = DmpPolicy::zero(25, Pose2::IDENTITY, Pose2::new(1.0, 0.0, 0.0), 1.0);
        let g = Pose2::new(1.0, 0.0, 0.0);
        assert!(rollout(&p, &Pose2::IDENTITY, &g, 1.0, 0.2).is_err());
        assert!(rollout(&p, &Pose2::IDENTITY, &g, 0.0, 0.01).is_err());
        assert!(rollout(&p, &Pose2::IDENTITY, &g, 1.0, 0.0).is_err());
    }

    #[test]
    fn fit_rejects_small_basis_and_bad_demo() {
        let demo = demo_1d(min_jerk, 1.0, 0.01);
        assert!(fit_dmp(&demo, 4).is_err());
        let mut broken = demo.clone();
        broken.samples.truncate(5);
        assert!(matches!(fit_dmp(&broken, 25), Err(Error::InvalidTrajectory(_))));
        let mut uneven = demo;
        uneven.samples[3].t += 0.004;
        assert!(uneven.validate().is_err());
    }

    #[test]
    fn theta_demo_crossing_pi_fits_cleanly() {
        // sweeps from 2.8 rad through pi to -2.9 (i.e. 3.38 unwrapped)
        let demo = Trajectory::from_poses(
            (0..=100).map(|k| {
                let u = min_jerk(k as f64 / 100.0);
                Pose2::new(0.0, 0.0, 2.8 + 0.58 * u)
            }),
            0.0,
            0.01,
        )
        .unwrap();
        let p = fit_dmp(&demo, 25).unwrap();
        assert!((p.dims[2].goal_ref - 3.38).abs() < 1e-9);
        let tr = rollout(&p, demo.first(), demo.last(), 1.0, 0.01).unwrap();
        let rebuilt = tr.unwrapped_theta();
        let want = demo.unwrapped_theta();
        let rmse = (rebuilt
            .iter()
            .zip(&want)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / want.len() as f64)
            .sqrt();
        assert!(rmse <= 0.02 * 0.58, "rmse {rmse}");
        assert!(tr.samples.iter().all(|s| s.pose.theta > -PI && s.pose.theta <= PI));
    }

    #[test]
    fn rollout_is_deterministic() {
        let demo = demo_1d(|u| min_jerk(u) + 0.2 * (PI * u).sin(), 1.0, 0.01);
        let p = fit_dmp(&demo, 25).unwrap();
        let a = rollout(&p, demo.first(), demo.last(), 1.3, 0.01).unwrap();
        let b = rollout(&p, demo.first(), demo.last(), 1.3, 0.01).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_round_trip() {
        let demo = demo_1d(min_jerk, 1.0, 0.01);
        let mut buf = Vec::new();
        demo.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"t,x,z,theta\n"));
        let back = Trajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.samples, demo.samples);
        assert!(Trajectory::read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn rollout_is_affine_in_goal(scale in 0.2..5.0f64) {
            let demo = demo_1d(|u| min_jerk(u) + 0.3 * (2.0 * PI * u).sin(), 1.0, 0.01);
            let p = fit_dmp(&demo, 25).unwrap();
            let start = *demo.first();
            let goal = *demo.last();
            let scaled = Pose2::new(start.x + scale * (goal.x - start.x), goal.z, goal.theta);
            let a = rollout(&p, &start, &goal, 1.0, 0.01).unwrap();
            let b = rollout(&p, &start, &scaled, 1.0, 0.01).unwrap();
            for (sa, sb) in a.samples.iter().zip(&b.samples) {
                let da = sa.pose.x - start.x;
                let db = sb.pose.x - start.x;
                prop_assert!((db - scale * da).abs() <= 1e-6 * (scale * da).abs().max(1e-3));
            }
        }
    }
}
