//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use taskgrasp::dmp::{DmpPolicy, Trajectory};
use taskgrasp::{OutcomeSignature, Pose2};

/// Error-free sum of two doubles.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Double-double accumulator.
#[derive(Default, Clone, Copy)]
pub struct DdSum {
    hi: f64,
    lo: f64,
}

impl DdSum {
    pub fn add(&mut self, x: f64) {
        let (s, e) = two_sum(self.hi, x);
        let (hi, lo) = two_sum(s, e + self.lo);
        self.hi = hi;
        self.lo = lo;
    }

    pub fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

/// Term-by-term divergence with a log-ratio that stays accurate near 1 and a
/// double-double sum.
pub fn kl_oracle(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    let mut acc = DdSum::default();
    for (&a, &b) in p.iter().zip(q) {
        if a == 0.0 {
            continue;
        }
        let r = (a - b) / b;
        let log_ratio = if r.abs() < 0.5 { r.ln_1p() } else { a.ln() - b.ln() };
        acc.add(a * log_ratio);
    }
    acc.value()
}

/// A smoothed signature with random occupancy, some bins empty.
pub fn random_signature<R: Rng>(rng: &mut R, n: usize) -> OutcomeSignature {
    let mut w: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..100.0f64).floor() })
        .collect();
    let k = rng.random_range(0..n);
    w[k] += 1.0;
    OutcomeSignature::from_weights([n, 1, 1], &w).expect("valid weights")
}

/// Semi-implicit Euler integration of the transformation system
/// `tau dz = a(b(g - y) - z) + f`, `tau dy = z`, `tau ds = -a_s s` with the
/// normalised radial-basis forcing scaled by phase and displacement.
/// Returns states at `samples` evenly spaced times including both ends.
pub fn euler_rollout(policy: &DmpPolicy, start: [f64; 3], goal: [f64; 3], duration: f64, samples: usize) -> Vec<[f64; 3]> {
    let substeps = 200;
    let h = duration / ((samples - 1) * substeps) as f64;
    let mut out = vec![start];
    let mut y = start;
    let mut z = [0.0; 3];
    let mut s = 1.0f64;
    for _ in 1..samples {
        for _ in 0..substeps {
            let mut f = [0.0; 3];
            for k in 0..3 {
                let d = &policy.dims[k];
                if d.degenerate {
                    continue;
                }
                let n = d.basis_count;
                let (mut num, mut den) = (0.0, 0.0);
                for i in 0..n {
                    let c = (-d.gains.alpha_s * i as f64 / (n - 1) as f64).exp();
                    let next = if i + 1 < n {
                        (-d.gains.alpha_s * (i + 1) as f64 / (n - 1) as f64).exp()
                    } else {
                        (-d.gains.alpha_s * (i - 1) as f64 / (n - 1) as f64).exp()
                    };
                    let width = 1.0 / (next - c).powi(2);
                    let psi = (-width * (s - c).powi(2)).exp();
                    num += psi * d.weights[i];
                    den += psi;
                }
                f[k] = num / den * s * (goal[k] - start[k]);
            }
            let g = policy.dims[0].gains;
            for k in 0..3 {
                z[k] += h * (g.alpha_y * (g.beta_y * (goal[k] - y[k]) - z[k]) + f[k]) / duration;
                y[k] += h * z[k] / duration;
            }
            s -= h * g.alpha_s * s / duration;
        }
        out.push(y);
    }
    out
}

pub fn min_jerk(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
}

/// Minimum-jerk point-to-point motion in every channel.
pub fn min_jerk_demo(start: Pose2, goal: Pose2, duration: f64, dt: f64) -> Trajectory {
    let n = (duration / dt).round() as usize + 1;
    Trajectory::from_poses(
        (0..n).map(|k| {
            let s = min_jerk(k as f64 * dt / duration);
            Pose2::new(
                start.x + (goal.x - start.x) * s,
                start.z + (goal.z - start.z) * s,
                start.theta + (goal.theta - start.theta) * s,
            )
        }),
        0.0,
        dt,
    )
    .expect("valid demo")
}

/// A sine-shaped detour (one squared half sine) on a minimum-jerk drift in
/// every channel, at rest at both ends.
pub fn sine_demo(amplitude: f64, duration: f64, dt: f64) -> Trajectory {
    let n = (duration / dt).round() as usize + 1;
    Trajectory::from_poses(
        (0..n).map(|k| {
            let u = k as f64 * dt / duration;
            let pi = std::f64::consts::PI;
            let wave = amplitude * (pi * u).sin().powi(2);
            let drift = min_jerk(u);
            Pose2::new(0.1 * drift + wave, 0.2 + 0.05 * drift + 0.5 * wave, 0.3 * drift + wave)
        }),
        0.0,
        dt,
    )
    .expect("valid demo")
}

/// Root-mean-square error per channel between two equally sampled
/// trajectories, on unwrapped angles.
pub fn rmse(a: &Trajectory, b: &Trajectory) -> [f64; 3] {
    assert_eq!(a.len(), b.len());
    let (ca, cb) = (a.channels(), b.channels());
    [0, 1, 2].map(|k| {
        let se: f64 = ca[k].iter().zip(&cb[k]).map(|(x, y)| (x - y).powi(2)).sum();
        (se / ca[k].len() as f64).sqrt()
    })
}

/// Peak-to-peak range per channel.
pub fn amplitude(t: &Trajectory) -> [f64; 3] {
    t.channels().map(|c| {
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    })
}
