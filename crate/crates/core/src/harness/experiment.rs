//! Trial runners and the similarity, rejection and comparison experiments.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::affordance::{deploy, DeployMode, DeployOptions, Deployment, Library, RecordOptions};
use crate::dmp::DmpPolicy;
use crate::error::Result;
use crate::perception::{derive_seed, detect_grasp_affordance_region, propose_grasp_candidates, PerceptionConfig};
use crate::simulate::{forward_simulate, ground_truth_success, SimConfig};
use crate::world::{d_h, GraspCandidate, ObjectModel, Scene, Task};

use super::config::ExperimentConfig;
use super::report::{bar_chart_svg, write_csv, write_trials, Strategy, TrialRecord};
use super::scenario::{build_library, default_demos, demo_mean_d_h, standard_scene, DemoBundle};

/// Bound on selected-grasp distance, as a multiple of the demonstration mean.
pub const SIMILARITY_BOUND: f64 = 2.0;
/// Threshold multipliers swept by the rejection experiment.
pub const DELTA_SWEEP: [f64; 7] = [0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 4.0];

/// Library and demonstrations built from a configuration.
pub struct Trained {
    pub library: Library,
    pub demos: BTreeMap<Task, Vec<DemoBundle>>,
}

pub fn train(cfg: &ExperimentConfig) -> Result<Trained> {
    let demos = default_demos(&cfg.tasks, cfg.demo_seed, &cfg.sim)?;
    let opts = RecordOptions {
        sim: cfg.sim.clone(),
        ..RecordOptions::default()
    };
    let library = build_library(&demos, &opts)?;
    Ok(Trained { library, demos })
}

/// Executes the task policy from `grasp` and asks the physics oracle.
pub fn execute(policy: &DmpPolicy, grasp: &GraspCandidate, scene: &Scene, task: Task, sim: &SimConfig) -> Result<bool> {
    let r = forward_simulate(policy, grasp, scene, task, sim)?;
    Ok(ground_truth_success(&r, task, scene, sim)?.is_success())
}

/// Perception settings for one trial, decorrelated across objects and tasks.
pub fn trial_perception(base: &PerceptionConfig, object: &str, task: Task, seed: u64) -> PerceptionConfig {
    base.with_seed(derive_seed(base.rng_seed ^ seed, &format!("trial/{object}/{task}")))
}

fn grasp_d_h(object: &ObjectModel, task: Task, grasp: &GraspCandidate) -> Result<f64> {
    Ok(d_h(&object.action_region(task)?.center, &grasp.pose_on_object))
}

pub struct TrialContext<'a> {
    pub library: &'a Library,
    pub perception: &'a PerceptionConfig,
    pub sim: &'a SimConfig,
    pub w_theta: f64,
}

/// Deploys once and scores the selection with the oracle.
pub fn simulated_trial(
    ctx: &TrialContext,
    object: &ObjectModel,
    task: Task,
    seed: u64,
    mode: DeployMode,
) -> Result<(TrialRecord, Deployment)> {
    let scene = standard_scene(object, task, seed);
    let pc = trial_perception(ctx.perception, &object.id, task, seed);
    let opts = DeployOptions {
        mode,
        w_theta: ctx.w_theta,
    };
    let dep = deploy(&scene, task, ctx.library, &pc, ctx.sim, &opts)?;
    let policy = &ctx.library.record(task)?.policy;
    let (success, d) = match &dep.selected {
        Some((g, _)) => (
            execute(policy, g, &scene, task, ctx.sim)?,
            Some(grasp_d_h(object, task, g)?),
        ),
        None => (false, None),
    };
    let record = TrialRecord {
        object: object.id.clone(),
        task,
        seed,
        strategy: Strategy::Simulated,
        selected: dep.selected.as_ref().map(|(g, _)| g.index),
        confidence: dep.selected.as_ref().map(|(_, r)| r.confidence),
        success,
        simulations: dep.simulations,
        candidates: dep.candidates.len(),
        d_h: d,
    };
    Ok((record, dep))
}

/// Picks the highest-scoring proposal without any simulation.
pub fn standalone_trial(ctx: &TrialContext, object: &ObjectModel, task: Task, seed: u64) -> Result<TrialRecord> {
    let scene = standard_scene(object, task, seed);
    let pc = trial_perception(ctx.perception, &object.id, task, seed);
    let g_star = detect_grasp_affordance_region(object, task, &pc)?;
    let candidates = propose_grasp_candidates(object, &g_star, &pc);
    let simulations = 0;
    let pick = candidates.first().copied();
    let policy = &ctx.library.record(task)?.policy;
    let (success, d) = match &pick {
        Some(g) => (
            execute(policy, g, &scene, task, ctx.sim)?,
            Some(grasp_d_h(object, task, g)?),
        ),
        None => (false, None),
    };
    Ok(TrialRecord {
        object: object.id.clone(),
        task,
        seed,
        strategy: Strategy::Standalone,
        selected: pick.map(|g| g.index),
        confidence: None,
        success,
        simulations,
        candidates: candidates.len(),
        d_h: d,
    })
}

fn grid(cfg: &ExperimentConfig) -> Result<Vec<(ObjectModel, Task, u64)>> {
    let objects = cfg.resolve_objects()?;
    let mut out = Vec::new();
    for o in &objects {
        for t in &cfg.tasks {
            for s in &cfg.seeds {
                out.push((o.clone(), *t, *s));
            }
        }
    }
    Ok(out)
}

fn ctx<'a>(cfg: &'a ExperimentConfig, library: &'a Library) -> TrialContext<'a> {
    TrialContext {
        library,
        perception: &cfg.perception,
        sim: &cfg.sim,
        w_theta: cfg.w_theta,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub task: Task,
    pub strategy: Strategy,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchRow {
    pub seed: u64,
    pub task: Task,
    pub standalone_rate: f64,
    pub simulated_rate: f64,
}

#[derive(Clone, Debug)]
pub struct CompareReport {
    pub trials: Vec<TrialRecord>,
    pub rates: Vec<RateRow>,
    /// Per seed and task, success rates across all objects.
    pub batches: Vec<BatchRow>,
}

impl CompareReport {
    pub fn rate(&self, task: Task, strategy: Strategy) -> Option<f64> {
        self.rates
            .iter()
            .find(|r| r.task == task && r.strategy == strategy)
            .map(|r| r.rate)
    }

    /// Fraction of seeds where the outcome-based strategy is at least as good
    /// as the standalone one on every task and strictly better on `strict`.
    pub fn dominant_batch_fraction(&self, strict: Task) -> f64 {
        let seeds: BTreeSet<u64> = self.batches.iter().map(|b| b.seed).collect();
        let good = seeds
            .iter()
            .filter(|s| {
                self.batches.iter().filter(|b| b.seed == **s).all(|b| {
                    b.simulated_rate >= b.standalone_rate
                        && (b.task != strict || b.simulated_rate > b.standalone_rate)
                })
            })
            .count();
        good as f64 / seeds.len().max(1) as f64
    }
}

fn rates_of(trials: &[TrialRecord]) -> Vec<RateRow> {
    let mut acc: BTreeMap<(Task, Strategy), (usize, usize)> = BTreeMap::new();
    for t in trials {
        let e = acc.entry((t.task, t.strategy)).or_default();
        e.0 += 1;
        e.1 += t.success as usize;
    }
    acc.into_iter()
        .map(|((task, strategy), (n, k))| RateRow {
            task,
            strategy,
            trials: n,
            successes: k,
            rate: k as f64 / n as f64,
        })
        .collect()
}

pub fn compare(cfg: &ExperimentConfig, library: &Library) -> Result<CompareReport> {
    let c = ctx(cfg, library);
    let per: Vec<Result<[TrialRecord; 2]>> = grid(cfg)?
        .par_iter()
        .map(|(o, t, s)| {
            let standalone = standalone_trial(&c, o, *t, *s)?;
            let (simulated, _) = simulated_trial(&c, o, *t, *s, DeployMode::OneShot)?;
            Ok([standalone, simulated])
        })
        .collect();
    let trials: Vec<TrialRecord> = per
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let rates = rates_of(&trials);
    let mut batches = Vec::new();
    for seed in &cfg.seeds {
        let batch: Vec<TrialRecord> = trials.iter().filter(|t| t.seed == *seed).cloned().collect();
        let r = rates_of(&batch);
        for task in &cfg.tasks {
            let get = |s: Strategy| {
                r.iter()
                    .find(|x| x.task == *task && x.strategy == s)
                    .map_or(0.0, |x| x.rate)
            };
            batches.push(BatchRow {
                seed: *seed,
                task: *task,
                standalone_rate: get(Strategy::Standalone),
                simulated_rate: get(Strategy::Simulated),
            });
        }
    }
    Ok(CompareReport { trials, rates, batches })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimilarityRow {
    pub object: String,
    pub task: Task,
    pub trials: usize,
    pub selected: usize,
    pub mean_d_h: Option<f64>,
    pub max_d_h: Option<f64>,
    pub demo_mean_d_h: f64,
}

#[derive(Clone, Debug)]
pub struct SimilarityReport {
    pub trials: Vec<TrialRecord>,
    pub rows: Vec<SimilarityRow>,
    pub demo_mean: BTreeMap<Task, f64>,
}

impl SimilarityReport {
    /// Whether every selected grasp lies within the bound of its task's
    /// demonstration mean.
    pub fn within_bound(&self, factor: f64) -> bool {
        self.trials.iter().all(|t| match t.d_h {
            Some(d) => d <= factor * self.demo_mean[&t.task],
            None => true,
        })
    }
}

pub fn similarity(cfg: &ExperimentConfig, trained: &Trained) -> Result<SimilarityReport> {
    let demo_mean = trained
        .demos
        .iter()
        .map(|(t, d)| Ok((*t, demo_mean_d_h(d)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let c = ctx(cfg, &trained.library);
    let trials = grid(cfg)?
        .par_iter()
        .map(|(o, t, s)| Ok(simulated_trial(&c, o, *t, *s, DeployMode::OneShot)?.0))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for o in &cfg.objects {
        let object = super::config::resolve_object(o)?;
        for task in &cfg.tasks {
            let ds: Vec<f64> = trials
                .iter()
                .filter(|t| t.object == object.id && t.task == *task)
                .filter_map(|t| t.d_h)
                .collect();
            let n = trials
                .iter()
                .filter(|t| t.object == object.id && t.task == *task)
                .count();
            rows.push(SimilarityRow {
                object: object.id.clone(),
                task: *task,
                trials: n,
                selected: ds.len(),
                mean_d_h: (!ds.is_empty()).then(|| ds.iter().sum::<f64>() / ds.len() as f64),
                max_d_h: ds.iter().copied().reduce(f64::max),
                demo_mean_d_h: demo_mean[task],
            });
        }
    }
    Ok(SimilarityReport { trials, rows, demo_mean })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RejectionRow {
    pub task: Task,
    pub delta_factor: f64,
    pub proposed: usize,
    pub rejected: usize,
    pub accepted: usize,
    pub rate: f64,
}

#[derive(Clone, Debug)]
pub struct RejectionReport {
    /// One row per task and threshold multiplier; factor 1 is the calibrated threshold.
    pub rows: Vec<RejectionRow>,
    /// Whether rejected sets grow monotonically along the sweep on every
    /// (object, task, seed).
    pub nested: bool,
}

impl RejectionReport {
    pub fn rate_at_calibrated(&self, task: Task) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.task == task && r.delta_factor == 1.0)
            .map(|r| r.rate)
    }
}

/// Indices of simulated candidates whose confidence does not clear `delta`.
pub fn rejected_set(dep: &Deployment, delta: f64) -> BTreeSet<usize> {
    dep.reports
        .iter()
        .filter(|r| r.confidence <= delta)
        .map(|r| r.candidate_index)
        .collect()
}

pub fn rejection(cfg: &ExperimentConfig, library: &Library) -> Result<RejectionReport> {
    let c = ctx(cfg, library);
    let runs = grid(cfg)?
        .par_iter()
        .map(|(o, t, s)| {
            let (_, dep) = simulated_trial(&c, o, *t, *s, DeployMode::Exhaustive)?;
            let delta = library.delta(*t)?;
            let sets: Vec<BTreeSet<usize>> = DELTA_SWEEP.iter().map(|f| rejected_set(&dep, f * delta)).collect();
            Ok((*t, dep.candidates.len(), sets))
        })
        .collect::<Result<Vec<_>>>()?;
    let nested = runs
        .iter()
        .all(|(_, _, sets)| sets.windows(2).all(|w| w[0].is_subset(&w[1])));
    let mut rows = Vec::new();
    for task in &cfg.tasks {
        for (k, f) in DELTA_SWEEP.iter().enumerate() {
            let (mut proposed, mut rejected) = (0, 0);
            for (t, n, sets) in &runs {
                if t == task {
                    proposed += n;
                    rejected += sets[k].len();
                }
            }
            rows.push(RejectionRow {
                task: *task,
                delta_factor: *f,
                proposed,
                rejected,
                accepted: proposed - rejected,
                rate: if proposed == 0 { 0.0 } else { rejected as f64 / proposed as f64 },
            });
        }
    }
    Ok(RejectionReport { rows, nested })
}

fn create(dir: &Path, name: &str) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::create_dir_all(dir)?;
    Ok(std::io::BufWriter::new(std::fs::File::create(dir.join(name))?))
}

fn task_names(tasks: &[Task]) -> Vec<String> {
    tasks.iter().map(|t| t.to_string()).collect()
}

pub fn write_compare(dir: &Path, cfg: &ExperimentConfig, rep: &CompareReport) -> Result<()> {
    let hash = cfg.hash();
    write_trials(create(dir, "trials.csv")?, &hash, &rep.trials)?;
    write_csv(create(dir, "summary.csv")?, "compare", &hash, &rep.rates)?;
    write_csv(create(dir, "batches.csv")?, "compare-batches", &hash, &rep.batches)?;
    let series: Vec<(String, Vec<f64>)> = [Strategy::Standalone, Strategy::Simulated]
        .iter()
        .map(|s| {
            (
                s.as_str().to_string(),
                cfg.tasks.iter().map(|t| rep.rate(*t, *s).unwrap_or(0.0)).collect(),
            )
        })
        .collect();
    let svg = bar_chart_svg("Task success rate", &hash, &task_names(&cfg.tasks), &series, None);
    std::fs::write(dir.join("compare.svg"), svg)?;
    Ok(())
}

pub fn write_similarity(dir: &Path, cfg: &ExperimentConfig, rep: &SimilarityReport) -> Result<()> {
    let hash = cfg.hash();
    write_trials(create(dir, "trials.csv")?, &hash, &rep.trials)?;
    write_csv(create(dir, "summary.csv")?, "similarity", &hash, &rep.rows)?;
    let objects: Vec<String> = rep
        .rows
        .iter()
        .map(|r| r.object.clone())
        .fold(Vec::new(), |mut v, o| {
            if !v.contains(&o) {
                v.push(o);
            }
            v
        });
    let series: Vec<(String, Vec<f64>)> = objects
        .iter()
        .map(|o| {
            let vals = cfg
                .tasks
                .iter()
                .map(|t| {
                    rep.rows
                        .iter()
                        .find(|r| &r.object == o && r.task == *t)
                        .and_then(|r| r.mean_d_h)
                        .unwrap_or(0.0)
                })
                .collect();
            (o.clone(), vals)
        })
        .collect();
    let refs: Vec<f64> = cfg.tasks.iter().map(|t| rep.demo_mean[t]).collect();
    let svg = bar_chart_svg(
        "Grasp to action-region distance (dashed: demonstration mean)",
        &hash,
        &task_names(&cfg.tasks),
        &series,
        Some(&refs),
    );
    std::fs::write(dir.join("similarity.svg"), svg)?;
    Ok(())
}

pub fn write_rejection(dir: &Path, cfg: &ExperimentConfig, rep: &RejectionReport) -> Result<()> {
    let hash = cfg.hash();
    write_csv(create(dir, "summary.csv")?, "rejection", &hash, &rep.rows)?;
    let series: Vec<(String, Vec<f64>)> = DELTA_SWEEP
        .iter()
        .map(|f| {
            (
                format!("{f} x threshold"),
                cfg.tasks
                    .iter()
                    .map(|t| {
                        rep.rows
                            .iter()
                            .find(|r| r.task == *t && r.delta_factor == *f)
                            .map_or(0.0, |r| r.rate)
                    })
                    .collect(),
            )
        })
        .collect();
    let svg = bar_chart_svg("Candidate rejection rate", &hash, &task_names(&cfg.tasks), &series, None);
    std::fs::write(dir.join("rejection.svg"), svg)?;
    Ok(())
}
