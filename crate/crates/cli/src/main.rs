use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use jobrec::bench::{
    evaluate_rankings, evaluate_transitions, gen_world, run_ab, synthetic_scripts, AbDesign, DialogueScript,
    SyntheticWorld, WorldConfig,
};
use jobrec::par::Mode;
use jobrec::service::{InMemoryStore, ServiceConfig, SystemClock};
use jobrec::tools::ScoringWeights;
use jobrec::tuning::{ctr_objective, optimize, ParamSpace};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "bench", version, about = "Synthetic worlds, A/B runs and weight tuning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic world directory.
    Gen {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        titles: usize,
        #[arg(long, default_value_t = 200)]
        users: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write scripted dialogues drawn from a world.
    Scripts {
        #[arg(long)]
        world: PathBuf,
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Share of scripts whose goal is a simple query.
        #[arg(long, default_value_t = 0.5)]
        simple_fraction: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Play scripts under several orchestrator variants and compare them.
    Ab {
        #[arg(long)]
        world: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "adapt,plan_execute,react_like,rag_like"
        )]
        variants: Vec<String>,
        /// Script file. Generated from the world (and saved here) when it does not exist.
        #[arg(long)]
        scripts: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "blocked")]
        design: AbDesign,
        /// Service configuration (TOML) shared by every variant.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Stub model delay per call.
        #[arg(long, default_value_t = 1.0)]
        lm_latency_ms: f64,
        /// Stub model delay per output token.
        #[arg(long, default_value_t = 0.1)]
        lm_token_latency_ms: f64,
        /// Cutoff for the offline ranking metrics in the report.
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Tune scoring weights against the world's click log.
    Tune {
        #[arg(long)]
        world: PathBuf,
        #[arg(long, default_value_t = 40)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_world(dir: &Path) -> Result<SyntheticWorld> {
    SyntheticWorld::load(dir).with_context(|| format!("loading world from {}", dir.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Gen {
            seed,
            titles,
            users,
            out,
        } => {
            let config = WorldConfig {
                titles,
                users,
                ..WorldConfig::default()
            };
            let world = gen_world(seed, config)?;
            world.save(&out).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "world seed {seed}: {} nodes, {} users, {} impressions -> {}",
                world.graph.node_count(),
                world.profiles.len(),
                world.clicks.len(),
                out.display()
            );
        }
        Command::Scripts {
            world,
            n,
            simple_fraction,
            seed,
            out,
        } => {
            let world = load_world(&world)?;
            let scripts = synthetic_scripts(&world, n, simple_fraction, seed);
            write_json(&out, &scripts)?;
            println!("{} scripts -> {}", scripts.len(), out.display());
        }
        Command::Ab {
            world,
            variants,
            scripts,
            seed,
            report,
            design,
            config,
            lm_latency_ms,
            lm_token_latency_ms,
            k,
        } => {
            let world = load_world(&world)?;
            let scripts_list: Vec<DialogueScript> = if scripts.exists() {
                let text = fs::read_to_string(&scripts).with_context(|| format!("reading {}", scripts.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", scripts.display()))?
            } else {
                let generated = synthetic_scripts(&world, 200, 0.5, seed);
                write_json(&scripts, &generated)?;
                generated
            };
            if scripts_list.is_empty() {
                bail!("{} holds no scripts", scripts.display());
            }
            let mut base = match &config {
                Some(path) => ServiceConfig::from_toml(
                    &fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
                )?,
                None => ServiceConfig::default(),
            };
            base.lm.latency_ms = lm_latency_ms;
            base.lm.token_latency_ms = lm_token_latency_ms;

            let deps = world.service_deps(Arc::new(SystemClock), Arc::new(InMemoryStore::new()));
            let names: Vec<&str> = variants.iter().map(String::as_str).collect();
            let mut metrics = run_ab(&names, &deps, &base, &scripts_list, design, seed)?;
            metrics.ranking = Some(evaluate_rankings(
                &world,
                &ScoringWeights::default(),
                k,
                Mode::default(),
            )?);
            metrics.transitions = Some(evaluate_transitions(&world)?);
            write_json(&report, &metrics)?;

            for v in &metrics.variants {
                println!(
                    "{:<14} scripts {:>4}  rounds {:>6.3}  latency {:>8.2} ms  errors {}",
                    v.variant, v.scripts, v.mean_rounds, v.latency_ms.mean, v.errors
                );
            }
            for t in &metrics.tests {
                println!(
                    "{} vs {}: rounds p = {:.3e}, latency p = {:.3e}",
                    t.a, t.b, t.rounds.p, t.latency.p
                );
            }
            println!("report -> {}", report.display());
        }
        Command::Tune {
            world,
            budget,
            seed,
            k,
            out,
        } => {
            let world = load_world(&world)?;
            let space = ParamSpace::scoring();
            let objective = ctr_objective(world.replay(Mode::default()), k);
            let optimum = optimize(&objective, &space, budget, seed)?;
            let baseline = objective(&ScoringWeights::default().to_vector())?;
            let best = ScoringWeights::from_vector(&optimum.best);
            write_json(
                &out,
                &json!({
                    "k": k,
                    "seed": seed,
                    "space": space,
                    "baseline_ctr": baseline,
                    "best": best,
                    "best_ctr": optimum.best_value,
                    "trials": optimum.trials,
                }),
            )?;
            println!(
                "CTR@{k}: default weights {baseline:.4}, tuned {:.4} after {} trials -> {}",
                optimum.best_value,
                optimum.trials.len(),
                out.display()
            );
        }
    }
    Ok(())
}
