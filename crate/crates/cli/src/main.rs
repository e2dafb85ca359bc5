use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use taskgrasp::affordance::{DeployMode, Library};
use taskgrasp::harness::experiment::{
    self, simulated_trial, write_compare, write_rejection, write_similarity, TrialContext,
};
use taskgrasp::harness::{gen_demos, resolve_object, write_trials, DemoMix, ExperimentConfig};
use taskgrasp::{Error, Task};

const EXIT_USAGE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "taskgrasp", version, about = "Task-oriented grasp selection by simulated outcomes")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Simulate every candidate instead of stopping at the first that passes.
    #[arg(long, global = true)]
    exhaustive: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate scripted demonstrations on the training mug.
    GenDemos {
        #[arg(long)]
        task: Option<Task>,
        #[arg(long, default_value_t = 6)]
        successful: usize,
        #[arg(long, default_value_t = 3)]
        undesired: usize,
    },
    /// Build the task library from scripted demonstrations.
    BuildLibrary {
        /// Library path (default: <output>/library.json).
        #[arg(long)]
        library: Option<PathBuf>,
    },
    /// Select a grasp for one object and task.
    Deploy {
        /// Builtin object id or object JSON path.
        #[arg(long)]
        object: String,
        #[arg(long)]
        task: Task,
        /// Library path (default: <output>/library.json).
        #[arg(long)]
        library: Option<PathBuf>,
    },
    /// Run an experiment over the configured objects, tasks and seeds.
    Experiment {
        which: Which,
        /// Library path; built from scratch when omitted.
        #[arg(long)]
        library: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Which {
    Similarity,
    Rejection,
    Compare,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            })
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = &cli.output {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn library_path(cfg: &ExperimentConfig, explicit: &Option<PathBuf>) -> PathBuf {
    explicit
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("library.json"))
}

fn load_library(path: &Path) -> Result<Library, Error> {
    Library::from_json(&fs::read_to_string(path)?)
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = load_config(&cli)?;
    let hash = cfg.hash();
    match &cli.command {
        Command::GenDemos {
            task,
            successful,
            undesired,
        } => {
            let mix = DemoMix {
                successful: *successful,
                undesired: *undesired,
            };
            let tasks = task.map_or(cfg.tasks.clone(), |t| vec![t]);
            let dir = cfg.output_dir.join("demos");
            fs::create_dir_all(&dir)?;
            let mut manifest = Vec::new();
            for t in tasks {
                for (i, d) in gen_demos(t, mix, cfg.demo_seed, &cfg.sim)?.iter().enumerate() {
                    let file = format!("{t}_{i}.csv");
                    d.trajectory.write_csv(BufWriter::new(fs::File::create(dir.join(&file))?))?;
                    manifest.push(json!({
                        "task": t,
                        "trajectory": file,
                        "grasp": d.grasp.pose_on_object,
                        "label": d.label,
                        "object_pose": d.scene.object_pose,
                    }));
                    println!("{t} demo {i}: {:?} -> {file}", d.label);
                }
            }
            let doc = json!({ "config": hash, "demos": manifest });
            fs::write(dir.join("demos.json"), serde_json::to_string_pretty(&doc)?)?;
        }
        Command::BuildLibrary { library } => {
            let trained = experiment::train(&cfg)?;
            let path = library_path(&cfg, library);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&path, trained.library.to_json()?)?;
            for (task, rec) in &trained.library.records {
                println!(
                    "{task}: {} outcomes, threshold {:.6}",
                    rec.outcomes.len(),
                    trained.library.delta(*task)?
                );
            }
            println!("wrote {}", path.display());
        }
        Command::Deploy {
            object,
            task,
            library,
        } => {
            let lib = load_library(&library_path(&cfg, library))?;
            let object = resolve_object(object)?;
            let ctx = TrialContext {
                library: &lib,
                perception: &cfg.perception,
                sim: &cfg.sim,
                w_theta: cfg.w_theta,
            };
            let mode = if cli.exhaustive {
                DeployMode::Exhaustive
            } else {
                DeployMode::OneShot
            };
            let mut trials = Vec::new();
            for seed in &cfg.seeds {
                let (rec, dep) = simulated_trial(&ctx, &object, *task, *seed, mode)?;
                match &dep.selected {
                    Some((g, r)) => println!(
                        "seed {seed}: candidate {} at ({:.4}, {:.4}, {:.4}) confidence {:.6} simulations {} success {}",
                        g.index,
                        g.pose_on_object.x,
                        g.pose_on_object.z,
                        g.pose_on_object.theta,
                        r.confidence,
                        dep.simulations,
                        rec.success
                    ),
                    None => println!(
                        "seed {seed}: none of {} candidates passed, simulations {}",
                        dep.candidates.len(),
                        dep.simulations
                    ),
                }
                trials.push(rec);
            }
            fs::create_dir_all(&cfg.output_dir)?;
            let out = cfg.output_dir.join("trials.csv");
            write_trials(BufWriter::new(fs::File::create(&out)?), &hash, &trials)?;
        }
        Command::Experiment { which, library } => {
            let trained = experiment::train(&cfg)?;
            let lib = match library {
                Some(p) => load_library(p)?,
                None => trained.library.clone(),
            };
            match which {
                Which::Compare => {
                    let dir = cfg.output_dir.join("compare");
                    let rep = experiment::compare(&cfg, &lib)?;
                    write_compare(&dir, &cfg, &rep)?;
                    for r in &rep.rates {
                        println!("{} {}: {}/{} ({:.3})", r.task, r.strategy.as_str(), r.successes, r.trials, r.rate);
                    }
                    println!("wrote {}", dir.display());
                }
                Which::Similarity => {
                    let dir = cfg.output_dir.join("similarity");
                    let trained = experiment::Trained {
                        library: lib,
                        demos: trained.demos,
                    };
                    let rep = experiment::similarity(&cfg, &trained)?;
                    write_similarity(&dir, &cfg, &rep)?;
                    for (t, m) in &rep.demo_mean {
                        println!("{t}: demonstration mean {m:.4}");
                    }
                    for r in &rep.rows {
                        println!(
                            "{} {}: mean {}",
                            r.object,
                            r.task,
                            r.mean_d_h.map_or("-".into(), |v| format!("{v:.4}"))
                        );
                    }
                    println!("wrote {}", dir.display());
                }
                Which::Rejection => {
                    let dir = cfg.output_dir.join("rejection");
                    let rep = experiment::rejection(&cfg, &lib)?;
                    write_rejection(&dir, &cfg, &rep)?;
                    for t in &cfg.tasks {
                        if let Some(r) = rep.rate_at_calibrated(*t) {
                            println!("{t}: rejection rate {r:.3}");
                        }
                    }
                    println!("nested: {}", rep.nested);
                    println!("wrote {}", dir.display());
                }
            }
        }
    }
    Ok(())
}
