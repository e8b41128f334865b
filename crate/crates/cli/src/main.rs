use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use ste_core::harness::{
    aggregate, emit_outputs, is_downwind, run_episode_with, run_monte_carlo, tune_jump,
    write_skill_outputs, EpisodeContext, EpisodeDumps, EpisodeLabel, MapSpec, ScenarioConfig,
    SweepConfig, TuneConfig,
};

#[derive(Parser)]
#[command(
    name = "ste",
    version,
    about = "Simulated search for an airborne release in a cluttered map"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single episode.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Accepted for symmetry with `sweep`; a single episode is sequential.
        #[arg(long)]
        workers: Option<usize>,
        /// Map file overriding the config.
        #[arg(long)]
        map: Option<PathBuf>,
        /// Directory for the particle set after every update.
        #[arg(long, value_name = "DIR")]
        dump_posterior: Option<PathBuf>,
        /// Directory for the sampling distribution, written whenever it is built.
        #[arg(long, value_name = "DIR")]
        dump_distribution: Option<PathBuf>,
        /// Directory for the groomed tree at every planning step.
        #[arg(long, value_name = "DIR")]
        dump_tree: Option<PathBuf>,
        /// Write every candidate's utility score next to the episode log.
        #[arg(long)]
        dump_utility: bool,
    },
    /// Run a scenario matrix.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Grid search over the jump planner's memory settings.
    TuneJump {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            out,
            workers: _,
            map,
            dump_posterior,
            dump_distribution,
            dump_tree,
            dump_utility,
        } => {
            let mut cfg = ScenarioConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(m) = map {
                cfg.map = MapSpec::file(m);
            }
            let dumps = EpisodeDumps {
                posterior: dump_posterior,
                distribution: dump_distribution,
                tree: dump_tree,
                utility: dump_utility,
            };
            let ctx = EpisodeContext::new(&cfg)?;
            let id = format!("{}-{}", cfg.planner, cfg.seed);
            let log = run_episode_with(&cfg, &ctx, &id, &dumps)?;
            let label = EpisodeLabel {
                source: "source".into(),
                start_index: 0,
                repeat: 0,
                downwind: is_downwind(&cfg.source, cfg.start),
            };
            let metrics = aggregate(
                std::slice::from_ref(&log),
                &[label],
                cfg.seed,
                cfg.output.lattice_step_s,
                cfg.robot.budget_s,
            );
            emit_outputs(&metrics, &[log.clone()], &out)?;
            match log.first_success {
                Some(t) => println!(
                    "{id}: {} samples, first success at {t:.0} s",
                    log.records.len()
                ),
                None => println!("{id}: {} samples, no success", log.records.len()),
            }
        }
        Command::Sweep {
            config,
            seed,
            out,
            workers,
            repeats,
        } => {
            let mut cfg = SweepConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(r) = repeats {
                cfg.repeats = r;
            }
            let (metrics, logs) = run_monte_carlo(&cfg, &EpisodeDumps::default())?;
            emit_outputs(&metrics, &logs, &out)?;
            print!("{}", ste_core::harness::output::summary_markdown(&metrics));
        }
        Command::TuneJump {
            config,
            out,
            workers,
        } => {
            let mut cfg = TuneConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let cells = tune_jump(&cfg)?;
            write_skill_outputs(&cells, &out)?;
            let best = cells
                .iter()
                .max_by(|a, b| a.score.total_cmp(&b.score).then(b.n_jump.cmp(&a.n_jump)));
            for c in &cells {
                println!(
                    "n_jump {:>2} m_jump {:>2}: SR {:.2} MST {:.0} score {:.3}",
                    c.n_jump, c.m_jump, c.sr, c.mst, c.score
                );
            }
            if let Some(b) = best {
                println!("best: n_jump {} m_jump {}", b.n_jump, b.m_jump);
            }
        }
    }
    Ok(())
}
