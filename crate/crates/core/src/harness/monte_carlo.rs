//! Seeded sweeps over (source, start, repeat, planner) and their aggregates.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plume::wind_unit;

use super::config::{resolve, MapSpec, PlannerKind, ScenarioConfig, SourceConfig};
use super::episode::{run_episode_with, EpisodeContext, EpisodeDumps, EpisodeLog, EpisodeStatus};
use super::scenario::{reference_sources, reference_starts};

/// A named ground-truth release, optionally on its own map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceCase {
    pub name: String,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapSpec>,
}

pub fn reference_cases() -> Vec<SourceCase> {
    reference_sources()
        .iter()
        .map(|s| SourceCase {
            name: s.name.to_string(),
            source: s.config,
            map: Some(MapSpec::builtin(s.map)),
        })
        .collect()
}

fn default_repeats() -> usize {
    1
}

fn default_planners() -> Vec<PlannerKind> {
    PlannerKind::ALL.to_vec()
}

fn default_workers() -> usize {
    1
}

/// Scenario matrix. Missing `sources` or `starts` fall back to the three
/// reference releases and five reference starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_planners")]
    pub planners: Vec<PlannerKind>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub sources: Vec<SourceCase>,
    #[serde(default)]
    pub starts: Vec<[f64; 2]>,
    /// Settings shared by every episode; its source, start, planner and seed
    /// are overwritten per job.
    #[serde(default)]
    pub base: ScenarioConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            repeats: 1,
            planners: default_planners(),
            workers: 1,
            sources: Vec::new(),
            starts: Vec::new(),
            base: ScenarioConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.base.resolve_paths(base);
        for s in &mut cfg.sources {
            if let Some(m) = &mut s.map {
                resolve(&mut m.path, base);
            }
        }
        Ok(cfg)
    }

    pub fn cases(&self) -> Vec<SourceCase> {
        if self.sources.is_empty() {
            reference_cases()
        } else {
            self.sources.clone()
        }
    }

    pub fn start_points(&self) -> Vec<[f64; 2]> {
        if self.starts.is_empty() {
            reference_starts().iter().map(|p| [p.x, p.y]).collect()
        } else {
            self.starts.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.planners.is_empty() {
            return Err(Error::Config("at least one planner is needed".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for c in self.cases() {
            if !seen.insert(c.name.clone()) {
                return Err(Error::Config(format!("duplicate source name {}", c.name)));
            }
        }
        self.base.validate()
    }
}

/// Episode seed for one (source, start, repeat) cell. Every planner sees the
/// same seed, and the value depends only on the indices, not on scheduling.
pub fn episode_seed(master: u64, source: usize, start: usize, repeat: usize) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(master);
    r.set_stream(((source as u64) << 44) | ((start as u64) << 24) | repeat as u64);
    r.next_u64()
}

/// One scheduled episode.
#[derive(Debug, Clone)]
pub struct Job {
    pub id: String,
    pub source: usize,
    pub start: usize,
    pub repeat: usize,
    pub config: ScenarioConfig,
}

pub fn expand_jobs(sweep: &SweepConfig) -> Vec<Job> {
    let cases = sweep.cases();
    let starts = sweep.start_points();
    let mut jobs = Vec::new();
    for (si, case) in cases.iter().enumerate() {
        for (pi, start) in starts.iter().enumerate() {
            for r in 0..sweep.repeats {
                let seed = episode_seed(sweep.master_seed, si, pi, r);
                for &planner in &sweep.planners {
                    let mut cfg = sweep.base.clone();
                    cfg.seed = seed;
                    cfg.planner = planner;
                    cfg.start = *start;
                    cfg.source = case.source;
                    if let Some(m) = &case.map {
                        cfg.map = m.clone();
                    }
                    jobs.push(Job {
                        id: format!("{planner}-{}-p{pi}-r{r:03}", case.name),
                        source: si,
                        start: pi,
                        repeat: r,
                        config: cfg,
                    });
                }
            }
        }
    }
    jobs
}

fn failed_log(job: &Job, msg: String) -> EpisodeLog {
    let c = &job.config;
    EpisodeLog {
        id: job.id.clone(),
        planner: c.planner,
        seed: c.seed,
        start: c.start,
        source: [c.source.x, c.source.y],
        budget_s: c.robot.budget_s,
        success_radius: c.robot.success_radius,
        records: Vec::new(),
        status: EpisodeStatus::Failed(msg),
        first_success: None,
        utility: Vec::new(),
    }
}

/// Runs every job on `workers` threads. Results come back in job order; an
/// episode that errors or panics is kept as a failed run.
pub fn run_jobs(
    jobs: &[Job],
    contexts: &[EpisodeContext],
    workers: usize,
    dumps: &EpisodeDumps,
) -> Result<Vec<EpisodeLog>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let done = AtomicUsize::new(0);
    let total = jobs.len();
    Ok(pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let ctx = &contexts[job.source];
                let out = catch_unwind(AssertUnwindSafe(|| {
                    run_episode_with(&job.config, ctx, &job.id, dumps)
                }));
                let log = match out {
                    Ok(Ok(log)) => log,
                    Ok(Err(e)) => {
                        log::warn!("{} failed: {e}", job.id);
                        failed_log(job, e.to_string())
                    }
                    Err(panic) => {
                        let msg = panic
                            .downcast_ref::<&str>()
                            .map(|s| s.to_string())
                            .or_else(|| panic.downcast_ref::<String>().cloned())
                            .unwrap_or_else(|| "panic".into());
                        log::warn!("{} panicked: {msg}", job.id);
                        failed_log(job, format!("panic: {msg}"))
                    }
                };
                let k = done.fetch_add(1, Ordering::Relaxed) + 1;
                log::info!(
                    "[{k}/{total}] {} first success {:?}",
                    job.id,
                    log.first_success
                );
                log
            })
            .collect()
    }))
}

/// Builds the per-source map and ground truth once.
pub fn build_contexts(sweep: &SweepConfig) -> Result<Vec<EpisodeContext>> {
    sweep
        .cases()
        .iter()
        .map(|case| {
            let mut cfg = sweep.base.clone();
            cfg.source = case.source;
            if let Some(m) = &case.map {
                cfg.map = m.clone();
            }
            EpisodeContext::new(&cfg)
        })
        .collect()
}

/// Runs the whole matrix and aggregates it.
pub fn run_monte_carlo(
    sweep: &SweepConfig,
    dumps: &EpisodeDumps,
) -> Result<(Metrics, Vec<EpisodeLog>)> {
    sweep.validate()?;
    let contexts = build_contexts(sweep)?;
    let jobs = expand_jobs(sweep);
    let logs = run_jobs(&jobs, &contexts, sweep.workers, dumps)?;
    let cases = sweep.cases();
    let labels: Vec<EpisodeLabel> = jobs
        .iter()
        .map(|j| EpisodeLabel {
            source: cases[j.source].name.clone(),
            start_index: j.start,
            repeat: j.repeat,
            downwind: is_downwind(&j.config.source, j.config.start),
        })
        .collect();
    let metrics = aggregate(
        &logs,
        &labels,
        sweep.master_seed,
        sweep.base.output.lattice_step_s,
        sweep.base.robot.budget_s,
    );
    Ok((metrics, logs))
}

/// True when the start lies on the downwind side of the release.
pub fn is_downwind(src: &SourceConfig, start: [f64; 2]) -> bool {
    let (ux, uy) = wind_unit(src.phi);
    (start[0] - src.x) * ux + (start[1] - src.y) * uy > 0.0
}

/// Grouping keys of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLabel {
    pub source: String,
    pub start_index: usize,
    pub repeat: usize,
    pub downwind: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub id: String,
    pub planner: PlannerKind,
    pub source: String,
    pub start_index: usize,
    pub repeat: usize,
    pub downwind: bool,
    pub seed: u64,
    pub failed: bool,
    pub samples: usize,
    pub first_success: Option<f64>,
    pub final_rmse: Option<f64>,
}

/// Success statistics for one planner over one group of episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub planner: PlannerKind,
    /// `all`, a source name, or `<source>/downwind`.
    pub group: String,
    pub runs: usize,
    pub failed: usize,
    pub successes: usize,
    pub sr: f64,
    /// Mean first-success time over successful runs.
    pub mst: Option<f64>,
}

/// Mean and population std of the weighted RMSE on the time lattice, holding
/// each episode's last value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseCurve {
    pub planner: PlannerKind,
    pub runs: usize,
    /// `None` where no episode has a sample yet.
    pub mean: Vec<Option<f64>>,
    pub std: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub master_seed: u64,
    pub budget_s: f64,
    pub lattice_step_s: f64,
    pub groups: Vec<GroupMetrics>,
    pub times: Vec<f64>,
    pub curves: Vec<RmseCurve>,
    pub episodes: Vec<EpisodeSummary>,
}

impl Metrics {
    pub fn group(&self, planner: PlannerKind, group: &str) -> Option<&GroupMetrics> {
        self.groups
            .iter()
            .find(|g| g.planner == planner && g.group == group)
    }
}

pub fn time_lattice(step: f64, budget: f64) -> Vec<f64> {
    let n = (budget / step).floor() as usize;
    (0..=n).map(|k| k as f64 * step).collect()
}

fn group_metrics(planner: PlannerKind, group: String, logs: &[&EpisodeLog]) -> GroupMetrics {
    let runs = logs.len();
    let failed = logs.iter().filter(|l| l.failed()).count();
    let times: Vec<f64> = logs.iter().filter_map(|l| success_time(l)).collect();
    let successes = times.len();
    GroupMetrics {
        planner,
        group,
        runs,
        failed,
        successes,
        sr: if runs == 0 {
            0.0
        } else {
            successes as f64 / runs as f64
        },
        mst: (successes > 0).then(|| times.iter().sum::<f64>() / successes as f64),
    }
}

/// First success within the budget.
pub fn success_time(log: &EpisodeLog) -> Option<f64> {
    log.first_success.filter(|&t| t <= log.budget_s)
}

/// RMSE of the last sample taken at or before `t`.
fn rmse_at(log: &EpisodeLog, t: f64) -> Option<f64> {
    let k = log.records.partition_point(|r| r.time <= t);
    (k > 0).then(|| log.records[k - 1].rmse)
}

/// Fixed-order aggregation of a finished sweep.
pub fn aggregate(
    logs: &[EpisodeLog],
    labels: &[EpisodeLabel],
    master_seed: u64,
    lattice_step: f64,
    budget: f64,
) -> Metrics {
    assert_eq!(logs.len(), labels.len(), "one label per episode");
    let mut planners: Vec<PlannerKind> = logs.iter().map(|l| l.planner).collect();
    planners.sort();
    planners.dedup();
    let mut sources: Vec<&str> = Vec::new();
    for l in labels {
        if !sources.contains(&l.source.as_str()) {
            sources.push(&l.source);
        }
    }
    let mut groups = Vec::new();
    for &p in &planners {
        let of = |keep: &dyn Fn(&EpisodeLabel) -> bool| -> Vec<&EpisodeLog> {
            logs.iter()
                .zip(labels)
                .filter(|(l, lab)| l.planner == p && keep(lab))
                .map(|(l, _)| l)
                .collect()
        };
        groups.push(group_metrics(p, "all".into(), &of(&|_| true)));
        for s in &sources {
            groups.push(group_metrics(p, s.to_string(), &of(&|l| l.source == *s)));
        }
        for s in &sources {
            groups.push(group_metrics(
                p,
                format!("{s}/downwind"),
                &of(&|l| l.source == *s && l.downwind),
            ));
        }
    }
    let times = time_lattice(lattice_step, budget);
    let mut curves = Vec::new();
    for &p in &planners {
        let runs: Vec<&EpisodeLog> = logs
            .iter()
            .filter(|l| l.planner == p && !l.records.is_empty())
            .collect();
        let mut mean = Vec::with_capacity(times.len());
        let mut std = Vec::with_capacity(times.len());
        for &t in &times {
            let vals: Vec<f64> = runs.iter().filter_map(|l| rmse_at(l, t)).collect();
            if vals.is_empty() {
                mean.push(None);
                std.push(None);
                continue;
            }
            let n = vals.len() as f64;
            let m = vals.iter().sum::<f64>() / n;
            let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
            mean.push(Some(m));
            std.push(Some(v.sqrt()));
        }
        curves.push(RmseCurve {
            planner: p,
            runs: runs.len(),
            mean,
            std,
        });
    }
    let episodes = logs
        .iter()
        .zip(labels)
        .map(|(l, lab)| EpisodeSummary {
            id: l.id.clone(),
            planner: l.planner,
            source: lab.source.clone(),
            start_index: lab.start_index,
            repeat: lab.repeat,
            downwind: lab.downwind,
            seed: l.seed,
            failed: l.failed(),
            samples: l.records.len(),
            first_success: success_time(l),
            final_rmse: l.final_rmse(),
        })
        .collect();
    Metrics {
        master_seed,
        budget_s: budget,
        lattice_step_s: lattice_step,
        groups,
        times,
        curves,
        episodes,
    }
}

/// Groups keyed by planner then group label.
pub fn group_table(m: &Metrics) -> BTreeMap<PlannerKind, Vec<&GroupMetrics>> {
    let mut out: BTreeMap<PlannerKind, Vec<&GroupMetrics>> = BTreeMap::new();
    for g in &m.groups {
        out.entry(g.planner).or_default().push(g);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::episode::{Action, StepRecord};

    fn record(time: f64, rmse: f64) -> StepRecord {
        StepRecord {
            step: 0,
            time,
            x: 0.0,
            y: 0.0,
            value: 0.0,
            detected: false,
            mean_x: 0.0,
            mean_y: 0.0,
            location_std: 0.0,
            rmse,
            ess: 1.0,
            resampled: false,
            action: Action::Move,
            candidates: 0,
            path_length: 0.0,
            score: None,
        }
    }

    fn scripted(planner: PlannerKind, rmse: &[(f64, f64)]) -> EpisodeLog {
        let first_success = rmse.iter().find(|r| r.1 < 50.0).map(|r| r.0);
        EpisodeLog {
            id: format!("{planner}"),
            planner,
            seed: 0,
            start: [0.0, 0.0],
            source: [0.0, 0.0],
            budget_s: 100.0,
            success_radius: 50.0,
            records: rmse.iter().map(|&(t, r)| record(t, r)).collect(),
            status: EpisodeStatus::BudgetExhausted,
            first_success,
            utility: Vec::new(),
        }
    }

    fn label(source: &str) -> EpisodeLabel {
        EpisodeLabel {
            source: source.into(),
            start_index: 0,
            repeat: 0,
            downwind: true,
        }
    }

    #[test]
    fn always_converging_planner_has_full_success() {
        let logs: Vec<_> = (0..7)
            .map(|k| {
                scripted(
                    PlannerKind::InformedTree,
                    &[(0.0, 300.0), (10.0 + k as f64, 10.0)],
                )
            })
            .collect();
        let labels: Vec<_> = (0..7).map(|_| label("a")).collect();
        let m = aggregate(&logs, &labels, 0, 10.0, 100.0);
        let g = m.group(PlannerKind::InformedTree, "all").unwrap();
        assert_eq!(g.sr, 1.0);
        assert_eq!(g.mst, Some(13.0));
        assert_eq!(m.times.len(), 11);
        assert_eq!(m.curves[0].mean[0], Some(300.0));
        assert_eq!(m.curves[0].mean[10], Some(10.0));
        assert!(m.curves[0].std.iter().all(|s| s.unwrap() >= 0.0));
    }

    #[test]
    fn failures_count_as_runs_and_late_success_ignored() {
        let mut late = scripted(PlannerKind::Jump, &[(0.0, 300.0), (150.0, 10.0)]);
        late.first_success = Some(150.0);
        let ok = scripted(PlannerKind::Jump, &[(0.0, 300.0), (40.0, 10.0)]);
        let mut bad = scripted(PlannerKind::Jump, &[]);
        bad.status = EpisodeStatus::Failed("boom".into());
        let logs = vec![late, ok, bad];
        let labels = vec![label("a"), label("a"), label("b")];
        let m = aggregate(&logs, &labels, 0, 10.0, 100.0);
        let g = m.group(PlannerKind::Jump, "all").unwrap();
        assert_eq!((g.runs, g.successes, g.failed), (3, 1, 1));
        assert!((g.sr - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(g.mst, Some(40.0));
        assert_eq!(m.group(PlannerKind::Jump, "b").unwrap().sr, 0.0);
        assert_eq!(m.group(PlannerKind::Jump, "b").unwrap().mst, None);
    }

    #[test]
    fn seeds_depend_on_indices_only() {
        let a = episode_seed(5, 1, 2, 3);
        assert_eq!(a, episode_seed(5, 1, 2, 3));
        assert_ne!(a, episode_seed(5, 2, 1, 3));
        assert_ne!(a, episode_seed(6, 1, 2, 3));
        let sweep = SweepConfig {
            repeats: 2,
            ..Default::default()
        };
        let jobs = expand_jobs(&sweep);
        assert_eq!(jobs.len(), 3 * 5 * 2 * 4);
        // Planners share the seed of their cell.
        assert!(jobs[..4]
            .iter()
            .all(|j| j.config.seed == jobs[0].config.seed));
        let ids: std::collections::HashSet<_> = jobs.iter().map(|j| j.id.clone()).collect();
        assert_eq!(ids.len(), jobs.len());
    }

    #[test]
    fn downwind_classification() {
        let s = SourceConfig::default();
        assert!(is_downwind(&s, [1100.0, 50.0]));
        assert!(!is_downwind(&s, [100.0, 650.0]));
    }

    #[test]
    fn lattice_covers_budget() {
        assert_eq!(time_lattice(60.0, 3600.0).len(), 61);
        assert_eq!(time_lattice(60.0, 0.0), vec![0.0]);
        assert_eq!(*time_lattice(7.0, 20.0).last().unwrap(), 14.0);
    }

    #[test]
    fn sweep_toml_parses() {
        let cfg = SweepConfig::from_toml(
            r#"
            master_seed = 9
            repeats = 3
            planners = ["jump", "informed_tree"]
            starts = [[1100.0, 50.0]]
            [[sources]]
            name = "canyon"
            map = { builtin = "urban" }
            source = { x = 534.0, y = 300.0, z = 1.0, q_kg_s = 1.0 }
            [base.pf]
            n = 100
            "#,
        )
        .unwrap();
        assert_eq!(cfg.repeats, 3);
        assert_eq!(cfg.base.pf.n, 100);
        assert_eq!(cfg.cases()[0].source.u, 2.5);
        assert_eq!(expand_jobs(&cfg).len(), 6);
        cfg.validate().unwrap();
    }
}
