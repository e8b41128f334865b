//! One search episode: measure, update, plan, move, until the clock runs out.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{entrotaxis_step, jump_step, JumpState, MyopicActionSet};
use crate::error::{Error, Result};
use crate::grid::{OccupancyGrid, WorldPoint};
use crate::inference::{init_prior, LogNormalSensor, ParticleSet};
use crate::plume::{sample_measurement, GroundTruthField, PlumeMode, ReplaySequence, SourceTerm};
use crate::tree::plan_from_samples;
use crate::utility::select_path;
use crate::windfield::{build_distribution, draw_samples, SampleDistribution};

use super::config::{PlannerKind, ScenarioConfig};

/// RNG sub-streams of an episode seed.
const STREAM_SENSOR: u64 = 0;
const STREAM_ESTIMATOR: u64 = 1;
const STREAM_PLANNER: u64 = 2;

const FALLBACK_TRIES: usize = 64;

/// What the robot did after a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// Last sample of the episode.
    End,
    Move,
    Jump,
    /// No admissible move; sampled again in place.
    Stall,
    /// Planner produced nothing; random nearby move.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub x: f64,
    pub y: f64,
    pub value: f64,
    pub detected: bool,
    pub mean_x: f64,
    pub mean_y: f64,
    pub location_std: f64,
    pub rmse: f64,
    pub ess: f64,
    pub resampled: bool,
    pub action: Action,
    /// Candidates the planner scored for the next move.
    pub candidates: usize,
    pub path_length: f64,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "message")]
pub enum EpisodeStatus {
    /// Ran until the time budget was spent.
    BudgetExhausted,
    /// Stopped at the first success.
    Succeeded,
    Failed(String),
}

/// Scores of every candidate at one planning step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityRow {
    pub step: usize,
    pub x: f64,
    pub y: f64,
    pub length: f64,
    pub score: f64,
    pub chosen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub id: String,
    pub planner: PlannerKind,
    pub seed: u64,
    pub start: [f64; 2],
    pub source: [f64; 2],
    pub budget_s: f64,
    pub success_radius: f64,
    pub records: Vec<StepRecord>,
    pub status: EpisodeStatus,
    /// Time of the first sample whose weighted RMSE fell below the success radius.
    pub first_success: Option<f64>,
    #[serde(skip)]
    pub utility: Vec<UtilityRow>,
}

impl EpisodeLog {
    pub fn failed(&self) -> bool {
        matches!(self.status, EpisodeStatus::Failed(_))
    }

    pub fn final_rmse(&self) -> Option<f64> {
        self.records.last().map(|r| r.rmse)
    }

    /// Per-step CSV.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        if self.records.is_empty() {
            w.write_record(STEP_COLUMNS).map_err(|e| csv_err(path, e))?;
        }
        for r in &self.records {
            w.serialize(r).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_utility_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        if self.utility.is_empty() {
            w.write_record(["step", "x", "y", "length", "score", "chosen"])
                .map_err(|e| csv_err(path, e))?;
        }
        for r in &self.utility {
            w.serialize(r).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub const STEP_COLUMNS: [&str; 16] = [
    "step",
    "time",
    "x",
    "y",
    "value",
    "detected",
    "mean_x",
    "mean_y",
    "location_std",
    "rmse",
    "ess",
    "resampled",
    "action",
    "candidates",
    "path_length",
    "score",
];

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: format!("{other:?}"),
        },
    }
}

/// Optional per-step artefacts.
#[derive(Debug, Clone, Default)]
pub struct EpisodeDumps {
    /// Directory for `posterior_<step>.csv`.
    pub posterior: Option<PathBuf>,
    /// Directory for `distribution_<step>.csv`, written whenever the
    /// sampling distribution is (re)built.
    pub distribution: Option<PathBuf>,
    /// Directory for `tree_<step>.csv`.
    pub tree: Option<PathBuf>,
    /// Keep every candidate's score in [`EpisodeLog::utility`].
    pub utility: bool,
}

/// Everything an episode needs that is expensive to rebuild per run.
#[derive(Debug, Clone)]
pub struct EpisodeContext {
    pub grid: OccupancyGrid,
    pub field: GroundTruthField,
}

impl EpisodeContext {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        let grid = cfg.map.load()?;
        Self::with_grid(cfg, grid)
    }

    pub fn with_grid(cfg: &ScenarioConfig, grid: OccupancyGrid) -> Result<Self> {
        let field = ground_truth(cfg, &grid)?;
        Ok(Self { grid, field })
    }
}

pub fn ground_truth(cfg: &ScenarioConfig, grid: &OccupancyGrid) -> Result<GroundTruthField> {
    let src: SourceTerm = cfg.source.to_source()?;
    let rho_min = grid.cell_size() / 2.0;
    let sigma = cfg.plume.noise_sigma;
    match cfg.plume.mode {
        PlumeMode::Analytic => GroundTruthField::analytic(src, sigma, rho_min),
        PlumeMode::Geodesic => GroundTruthField::geodesic(src, sigma, grid),
        PlumeMode::Replay => {
            let frames = match &cfg.plume.replay_index {
                Some(p) => Some(ReplaySequence::load(p, grid)?),
                None => None,
            };
            GroundTruthField::replay(src, sigma, rho_min, frames)
        }
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Smallest absolute difference between two bearings, degrees.
fn bearing_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

struct Plan {
    waypoints: Vec<WorldPoint>,
    action: Action,
    candidates: usize,
    score: Option<f64>,
}

struct PlannerState {
    kind: PlannerKind,
    actions: MyopicActionSet,
    jump: Option<JumpState>,
    dist: Option<SampleDistribution>,
    samples: Option<Vec<WorldPoint>>,
}

impl PlannerState {
    fn new(cfg: &ScenarioConfig, grid: &OccupancyGrid) -> Result<Self> {
        let dist = match cfg.planner {
            PlannerKind::UniformTree => Some(SampleDistribution::uniform(grid)?),
            _ => None,
        };
        let jump = match cfg.planner {
            PlannerKind::Jump => Some(JumpState::new(cfg.baseline.n_jump, cfg.baseline.m_jump)?),
            _ => None,
        };
        Ok(Self {
            kind: cfg.planner,
            actions: cfg.baseline.actions(),
            jump,
            dist,
            samples: None,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn plan(
        &mut self,
        cfg: &ScenarioConfig,
        grid: &OccupancyGrid,
        ps: &ParticleSet,
        model: &LogNormalSensor,
        x: WorldPoint,
        step: usize,
        dumps: &EpisodeDumps,
        utility: &mut Vec<UtilityRow>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<Plan>> {
        let n_z = cfg.utility.n_z;
        let noiseless = cfg.utility.noiseless_prediction;
        let decision = match self.kind {
            PlannerKind::Entrotaxis => {
                entrotaxis_step(ps, model, x, grid, &self.actions, n_z, noiseless, rng)?
            }
            PlannerKind::Jump => {
                let state = self.jump.as_mut().expect("jump state");
                jump_step(
                    ps,
                    model,
                    x,
                    grid,
                    &self.actions,
                    state,
                    n_z,
                    noiseless,
                    rng,
                )?
            }
            PlannerKind::UniformTree | PlannerKind::InformedTree => {
                return self.plan_tree(cfg, grid, ps, model, x, step, dumps, utility, rng);
            }
        };
        if dumps.utility {
            let chosen = decision.target();
            utility.extend(decision.evaluated.iter().map(|a| UtilityRow {
                step,
                x: a.endpoint.x,
                y: a.endpoint.y,
                length: a.step,
                score: a.score,
                chosen: !decision.stalled && a.endpoint == chosen,
            }));
        }
        let score = decision
            .evaluated
            .iter()
            .find(|a| a.endpoint == decision.target())
            .map(|a| a.score);
        let action = if decision.stalled {
            Action::Stall
        } else if decision.jumped {
            Action::Jump
        } else {
            Action::Move
        };
        Ok(Some(Plan {
            candidates: decision.evaluated.len(),
            waypoints: decision.waypoints,
            action,
            score,
        }))
    }

    #[allow(clippy::too_many_arguments)]
    fn plan_tree(
        &mut self,
        cfg: &ScenarioConfig,
        grid: &OccupancyGrid,
        ps: &ParticleSet,
        model: &LogNormalSensor,
        x: WorldPoint,
        step: usize,
        dumps: &EpisodeDumps,
        utility: &mut Vec<UtilityRow>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<Plan>> {
        let mut rebuilt = false;
        if self.kind == PlannerKind::InformedTree {
            let phi = ps.mean_phi();
            let stale = match self.dist.as_ref().and_then(|d| d.phi()) {
                Some(old) => bearing_gap(old, phi) > cfg.tree.rebuild_threshold_deg,
                None => true,
            };
            if stale {
                log::debug!("building sampling distribution for wind from {phi:.1} deg");
                self.dist = Some(build_distribution(grid, phi)?);
                rebuilt = true;
            }
        } else {
            rebuilt = step == 0;
        }
        let dist = self.dist.as_ref().expect("distribution");
        if rebuilt {
            if let Some(dir) = &dumps.distribution {
                dist.write_csv(grid, dir.join(format!("distribution_{step:04}.csv")))?;
            }
        }
        if self.samples.is_none() || rebuilt || !cfg.tree.recycle_samples {
            self.samples = Some(draw_samples(dist, grid, cfg.tree.batch_size, rng));
        }
        let samples = self.samples.as_deref().expect("samples");
        let goal = ps.posterior_mean_location();
        let res = plan_from_samples(
            samples,
            x,
            goal,
            ps.location_std(),
            dist,
            grid,
            &cfg.tree,
            rng,
        )?;
        if res.report.shortfall > 0 {
            log::debug!("step {step}: {} candidates short", res.report.shortfall);
        }
        if let Some(dir) = &dumps.tree {
            res.tree.save_csv(dir.join(format!("tree_{step:04}.csv")))?;
        }
        if res.candidates.is_empty() {
            return Ok(None);
        }
        let sel = select_path(
            &res.candidates,
            ps,
            model,
            cfg.utility.n_z,
            cfg.utility.noiseless_prediction,
            rng,
        )?;
        if dumps.utility {
            utility.extend(res.candidates.iter().zip(&sel.scores).enumerate().map(
                |(i, (c, &s))| UtilityRow {
                    step,
                    x: c.terminal().x,
                    y: c.terminal().y,
                    length: c.length,
                    score: s,
                    chosen: i == sel.index,
                },
            ));
        }
        let chosen = &res.candidates[sel.index];
        Ok(Some(Plan {
            waypoints: chosen.waypoints.clone(),
            action: Action::Move,
            candidates: res.candidates.len(),
            score: Some(sel.scores[sel.index]),
        }))
    }
}

/// Random collision-free move of up to `max_step` metres; stays put if none is found.
fn fallback_move<R: Rng + ?Sized>(
    grid: &OccupancyGrid,
    x: WorldPoint,
    max_step: f64,
    rng: &mut R,
) -> Plan {
    for _ in 0..FALLBACK_TRIES {
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        let r = max_step * rng.random_range(0.25..=1.0);
        let p = WorldPoint::new(x.x + r * a.cos(), x.y + r * a.sin());
        if grid.is_free(p) && grid.segment_free(x, p) {
            return Plan {
                waypoints: vec![x, p],
                action: Action::Fallback,
                candidates: 0,
                score: None,
            };
        }
    }
    Plan {
        waypoints: vec![x],
        action: Action::Stall,
        candidates: 0,
        score: None,
    }
}

fn path_length(w: &[WorldPoint]) -> f64 {
    w.windows(2).map(|s| s[0].distance(&s[1])).sum()
}

/// Runs one episode with freshly built map and ground truth.
pub fn run_episode(cfg: &ScenarioConfig) -> Result<EpisodeLog> {
    let ctx = EpisodeContext::new(cfg)?;
    run_episode_with(
        cfg,
        &ctx,
        &format!("{}-{}", cfg.planner, cfg.seed),
        &EpisodeDumps::default(),
    )
}

/// Runs one episode on a prepared map and field.
pub fn run_episode_with(
    cfg: &ScenarioConfig,
    ctx: &EpisodeContext,
    id: &str,
    dumps: &EpisodeDumps,
) -> Result<EpisodeLog> {
    cfg.validate()?;
    let grid = &ctx.grid;
    let start = cfg.start_point();
    if !grid.is_free(start) {
        return Err(Error::Config(format!(
            "start ({}, {}) is not in free space",
            start.x, start.y
        )));
    }
    for dir in [&dumps.posterior, &dumps.distribution, &dumps.tree]
        .into_iter()
        .flatten()
    {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let truth = cfg.source.location();
    let mut sensor_rng = stream(cfg.seed, STREAM_SENSOR);
    let mut est_rng = stream(cfg.seed, STREAM_ESTIMATOR);
    let mut plan_rng = stream(cfg.seed, STREAM_PLANNER);

    let model = LogNormalSensor::new(
        cfg.inference.lik_sigma,
        cfg.sensor.threshold,
        grid.cell_size() / 2.0,
    )?;
    let mut ps = init_prior(
        &cfg.prior,
        cfg.pf.n,
        cfg.pf.eta,
        cfg.pf.jitter_scale,
        &mut est_rng,
    )?;
    let mut planner = PlannerState::new(cfg, grid)?;

    let mut log = EpisodeLog {
        id: id.to_string(),
        planner: cfg.planner,
        seed: cfg.seed,
        start: cfg.start,
        source: [truth.x, truth.y],
        budget_s: cfg.robot.budget_s,
        success_radius: cfg.robot.success_radius,
        records: Vec::new(),
        status: EpisodeStatus::BudgetExhausted,
        first_success: None,
        utility: Vec::new(),
    };
    let budget = cfg.robot.budget_s;
    let mut x = start;
    let mut t = 0.0;
    let mut step = 0;
    loop {
        let z = sample_measurement(
            &ctx.field,
            grid,
            x,
            cfg.sensor.threshold,
            t,
            step,
            &mut sensor_rng,
        )?;
        let info = ps.update(&z, &model, &mut est_rng);
        let mean = ps.posterior_mean_location();
        let rmse = ps.weighted_rmse(truth);
        if let Some(dir) = &dumps.posterior {
            ps.write_csv(dir.join(format!("posterior_{step:04}.csv")))?;
        }
        log.records.push(StepRecord {
            step,
            time: t,
            x: x.x,
            y: x.y,
            value: z.value,
            detected: z.detected,
            mean_x: mean.x,
            mean_y: mean.y,
            location_std: ps.location_std(),
            rmse,
            ess: info.ess,
            resampled: info.resampled,
            action: Action::End,
            candidates: 0,
            path_length: 0.0,
            score: None,
        });
        if rmse < cfg.robot.success_radius && log.first_success.is_none() {
            log.first_success = Some(t);
            if cfg.robot.stop_on_success {
                log.status = EpisodeStatus::Succeeded;
                break;
            }
        }
        if t >= budget {
            break;
        }
        let plan = match planner.plan(
            cfg,
            grid,
            &ps,
            &model,
            x,
            step,
            dumps,
            &mut log.utility,
            &mut plan_rng,
        ) {
            Ok(Some(p)) => p,
            Ok(None) => {
                log::info!(
                    "{id} step {step}: planner returned no candidates; taking a random nearby move"
                );
                fallback_move(grid, x, planner.actions.max_step(), &mut plan_rng)
            }
            Err(Error::Planner(msg)) => {
                log::info!("{id} step {step}: {msg}; taking a random nearby move");
                fallback_move(grid, x, planner.actions.max_step(), &mut plan_rng)
            }
            Err(e) => return Err(e),
        };
        let length = path_length(&plan.waypoints);
        let mut dt = length / cfg.robot.velocity + cfg.robot.dwell_s;
        if dt <= 0.0 {
            // Sampling in place with no dwell would never advance the clock.
            dt = 1.0;
        }
        let rec = log.records.last_mut().expect("just pushed");
        rec.action = plan.action;
        rec.candidates = plan.candidates;
        rec.path_length = length;
        rec.score = plan.score;
        if t + dt > budget {
            rec.action = Action::End;
            break;
        }
        t += dt;
        x = *plan.waypoints.last().expect("non-empty path");
        step += 1;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::MapSpec;
    use crate::harness::scenario::BuiltinMap;

    fn small(planner: PlannerKind) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.planner = planner;
        cfg.map = MapSpec::builtin(BuiltinMap::Urban);
        cfg.pf.n = 500;
        cfg.tree.batch_size = 300;
        cfg.utility.n_z = 8;
        cfg.robot.budget_s = 300.0;
        cfg.seed = 11;
        cfg
    }

    #[test]
    fn zero_budget_gives_initial_sample_only() {
        let mut cfg = small(PlannerKind::Entrotaxis);
        cfg.robot.budget_s = 0.0;
        let log = run_episode(&cfg).unwrap();
        assert_eq!(log.records.len(), 1);
        assert_eq!(log.records[0].time, 0.0);
        assert_eq!(log.records[0].action, Action::End);
    }

    #[test]
    fn time_accounting() {
        for kind in PlannerKind::ALL {
            let cfg = small(kind);
            let log = run_episode(&cfg).unwrap();
            assert!(log.records.len() > 1, "{kind}");
            for w in log.records.windows(2) {
                assert!(w[1].time > w[0].time);
                let expect = w[0].path_length / cfg.robot.velocity + cfg.robot.dwell_s;
                assert!(
                    (w[1].time - w[0].time - expect.max(1.0)).abs() < 1e-9,
                    "{kind}"
                );
                let moved =
                    WorldPoint::new(w[0].x, w[0].y).distance(&WorldPoint::new(w[1].x, w[1].y));
                assert!(moved <= w[0].path_length + 1e-9);
            }
            assert!(log.records.last().unwrap().time <= cfg.robot.budget_s);
        }
    }

    #[test]
    fn straight_traversal_costs_length_over_speed_plus_dwell() {
        // 100 m at 2 m/s: 50 s, plus the dwell at the new point.
        let plan = vec![
            WorldPoint::new(0.0, 0.0),
            WorldPoint::new(60.0, 0.0),
            WorldPoint::new(60.0, 40.0),
        ];
        let cfg = ScenarioConfig::default();
        let dt = path_length(&plan) / cfg.robot.velocity + cfg.robot.dwell_s;
        assert_eq!(dt, 55.0);
    }

    #[test]
    fn same_seed_same_log() {
        for kind in [PlannerKind::Jump, PlannerKind::InformedTree] {
            let cfg = small(kind);
            let a = run_episode(&cfg).unwrap();
            let b = run_episode(&cfg).unwrap();
            assert_eq!(a, b);
            let dir = tempfile::tempdir().unwrap();
            a.write_csv(dir.path().join("a.csv")).unwrap();
            b.write_csv(dir.path().join("b.csv")).unwrap();
            assert_eq!(
                std::fs::read(dir.path().join("a.csv")).unwrap(),
                std::fs::read(dir.path().join("b.csv")).unwrap()
            );
        }
    }

    #[test]
    fn blocked_start_is_config_error() {
        let mut cfg = small(PlannerKind::Entrotaxis);
        let s3 = crate::harness::scenario::reference_sources()[2].config;
        cfg.start = [s3.x - 20.0, s3.y];
        assert!(matches!(run_episode(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn fallback_moves_stay_free() {
        let grid = crate::harness::scenario::builtin_map(BuiltinMap::Urban);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = WorldPoint::new(1100.0, 50.0);
        for _ in 0..50 {
            let p = fallback_move(&grid, x, 20.0, &mut rng);
            let end = *p.waypoints.last().unwrap();
            assert!(grid.is_free(end));
            assert!(path_length(&p.waypoints) <= 20.0 + 1e-9);
        }
    }

    #[test]
    fn csv_has_fixed_columns() {
        let log = run_episode(&small(PlannerKind::Entrotaxis)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        log.write_csv(&p).unwrap();
        let mut r = csv::Reader::from_path(&p).unwrap();
        assert_eq!(
            r.headers().unwrap().iter().collect::<Vec<_>>(),
            STEP_COLUMNS.to_vec()
        );
        for rec in r.records() {
            assert_eq!(rec.unwrap().len(), STEP_COLUMNS.len());
        }
    }

    #[test]
    fn bearing_gap_wraps() {
        assert_eq!(bearing_gap(350.0, 10.0), 20.0);
        assert_eq!(bearing_gap(10.0, 350.0), 20.0);
        assert_eq!(bearing_gap(90.0, 270.0), 180.0);
    }
}
