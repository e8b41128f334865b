//! Myopic reference planners and the skill score used to tune them.
//!
//! Both planners look at a fixed fan of straight moves around the robot.
//! The plain planner discards moves that would hit an obstacle. The jump
//! variant also scores blocked moves; when the best-scoring move keeps
//! pointing into an obstacle it follows a grid path around it instead.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{OccupancyGrid, WorldPoint};
use crate::inference::{ParticleSet, SensorModel};
use crate::utility::{better, Hypotheses, UtilityEvaluator};
use crate::windfield::shortest_path;

/// Headings (degrees, counter-clockwise from +x) and step lengths (metres).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MyopicActionSet {
    pub directions: Vec<f64>,
    pub step_sizes: Vec<f64>,
}

impl Default for MyopicActionSet {
    fn default() -> Self {
        Self {
            directions: (0..8).map(|k| 45.0 * k as f64).collect(),
            step_sizes: vec![10.0, 20.0],
        }
    }
}

impl MyopicActionSet {
    pub fn validate(&self) -> Result<()> {
        if self.directions.is_empty() || self.step_sizes.is_empty() {
            return Err(Error::Config(
                "action set needs at least one direction and step size".into(),
            ));
        }
        if self.step_sizes.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config("step sizes must be positive".into()));
        }
        if self.directions.iter().any(|d| !d.is_finite()) {
            return Err(Error::Config("directions must be finite".into()));
        }
        Ok(())
    }

    pub fn max_step(&self) -> f64 {
        self.step_sizes.iter().copied().fold(0.0, f64::max)
    }

    /// (direction index, step length, endpoint) for every action.
    pub fn candidates(&self, x: WorldPoint) -> Vec<(usize, f64, WorldPoint)> {
        let mut out = Vec::with_capacity(self.directions.len() * self.step_sizes.len());
        for (k, d) in self.directions.iter().enumerate() {
            let r = d.to_radians();
            for &s in &self.step_sizes {
                out.push((k, s, WorldPoint::new(x.x + s * r.cos(), x.y + s * r.sin())));
            }
        }
        out
    }
}

/// Scored action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredAction {
    pub direction: usize,
    pub step: f64,
    pub endpoint: WorldPoint,
    pub score: f64,
    pub feasible: bool,
}

/// What a myopic planner decided for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct MyopicDecision {
    /// Route starting at the current position; a single point when stalled.
    pub waypoints: Vec<WorldPoint>,
    pub evaluated: Vec<ScoredAction>,
    pub stalled: bool,
    pub jumped: bool,
}

impl MyopicDecision {
    pub fn target(&self) -> WorldPoint {
        *self.waypoints.last().unwrap()
    }
}

fn pick(actions: &[ScoredAction], feasible_only: bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, a) in actions.iter().enumerate() {
        if feasible_only && !a.feasible {
            continue;
        }
        let better_than =
            |b: &ScoredAction| better((a.score, a.step, a.endpoint), (b.score, b.step, b.endpoint));
        if best.is_none_or(|b| better_than(&actions[b])) {
            best = Some(i);
        }
    }
    best
}

/// Plain myopic step: scores every collision-free move and takes the best.
/// Stays put when every move is blocked.
#[allow(clippy::too_many_arguments)]
pub fn entrotaxis_step<M: SensorModel + ?Sized, R: Rng + ?Sized>(
    ps: &ParticleSet,
    model: &M,
    x_k: WorldPoint,
    grid: &OccupancyGrid,
    actions: &MyopicActionSet,
    n_z: usize,
    noiseless: bool,
    rng: &mut R,
) -> Result<MyopicDecision> {
    if !grid.is_free(x_k) {
        return Err(Error::Caller(format!("robot position {x_k:?} is not free")));
    }
    let hyp = Hypotheses::draw(ps, n_z, noiseless, rng)?;
    let mut eval = UtilityEvaluator::new(ps, model, hyp);
    let evaluated: Vec<ScoredAction> = actions
        .candidates(x_k)
        .into_iter()
        .filter(|(_, _, p)| grid.segment_free(x_k, *p))
        .map(|(direction, step, endpoint)| ScoredAction {
            direction,
            step,
            endpoint,
            score: eval.evaluate(endpoint),
            feasible: true,
        })
        .collect();
    Ok(match pick(&evaluated, true) {
        Some(i) => MyopicDecision {
            waypoints: vec![x_k, evaluated[i].endpoint],
            evaluated,
            stalled: false,
            jumped: false,
        },
        None => {
            log::debug!(
                "every move from ({:.1}, {:.1}) is blocked; sampling in place",
                x_k.x,
                x_k.y
            );
            MyopicDecision {
                waypoints: vec![x_k],
                evaluated,
                stalled: true,
                jumped: false,
            }
        }
    })
}

/// Blocked-direction memory of the jump planner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JumpState {
    pub n_jump: usize,
    pub m_jump: usize,
    /// For each of the last `m_jump` moves, the directions whose blocked
    /// moves outscored every feasible one.
    history: VecDeque<Vec<usize>>,
}

impl JumpState {
    pub fn new(n_jump: usize, m_jump: usize) -> Result<Self> {
        if n_jump == 0 || m_jump == 0 {
            return Err(Error::Config("n_jump and m_jump must be at least 1".into()));
        }
        Ok(Self {
            n_jump,
            m_jump,
            history: VecDeque::with_capacity(m_jump),
        })
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    /// Blocked events for `direction` within the memory window.
    pub fn count(&self, direction: usize) -> usize {
        self.history
            .iter()
            .filter(|e| e.contains(&direction))
            .count()
    }

    fn record(&mut self, mut events: Vec<usize>) {
        events.sort_unstable();
        events.dedup();
        if self.history.len() == self.m_jump {
            self.history.pop_front();
        }
        self.history.push_back(events);
    }

    fn reset(&mut self, direction: usize) {
        for e in &mut self.history {
            e.retain(|&d| d != direction);
        }
    }
}

/// Walks from `p` along `heading` until leaving the obstacle it sits in.
fn first_free_along(
    grid: &OccupancyGrid,
    p: WorldPoint,
    heading: f64,
    max_extra: f64,
) -> Option<WorldPoint> {
    if grid.is_free(p) {
        return Some(p);
    }
    let (dx, dy) = (heading.to_radians().cos(), heading.to_radians().sin());
    let step = 0.5 * grid.cell_size();
    let mut t = step;
    while t <= max_extra {
        let q = WorldPoint::new(p.x + t * dx, p.y + t * dy);
        if !grid.contains(q) {
            return None;
        }
        if grid.is_free(q) {
            return Some(q);
        }
        t += step;
    }
    None
}

/// Myopic step that remembers blocked directions and jumps around obstacles.
///
/// Every in-domain move is scored. If the best one is feasible it is taken.
/// Otherwise each direction whose blocked move beats all feasible moves
/// registers a blocked event; once the best direction has `n_jump` events in
/// the last `m_jump` moves, the robot follows the grid shortest path to the
/// blocked endpoint (moved forward to the first free point if it lies inside
/// an obstacle). Unreachable jumps fall back to the best feasible move.
#[allow(clippy::too_many_arguments)]
pub fn jump_step<M: SensorModel + ?Sized, R: Rng + ?Sized>(
    ps: &ParticleSet,
    model: &M,
    x_k: WorldPoint,
    grid: &OccupancyGrid,
    actions: &MyopicActionSet,
    state: &mut JumpState,
    n_z: usize,
    noiseless: bool,
    rng: &mut R,
) -> Result<MyopicDecision> {
    if !grid.is_free(x_k) {
        return Err(Error::Caller(format!("robot position {x_k:?} is not free")));
    }
    let hyp = Hypotheses::draw(ps, n_z, noiseless, rng)?;
    let mut eval = UtilityEvaluator::new(ps, model, hyp);
    let evaluated: Vec<ScoredAction> = actions
        .candidates(x_k)
        .into_iter()
        .filter(|(_, _, p)| grid.contains(*p))
        .map(|(direction, step, endpoint)| ScoredAction {
            direction,
            step,
            endpoint,
            score: eval.evaluate(endpoint),
            feasible: grid.segment_free(x_k, endpoint),
        })
        .collect();
    let best_feasible = pick(&evaluated, true);
    let best_any = pick(&evaluated, false);

    let events: Vec<usize> = evaluated
        .iter()
        .filter(|a| {
            !a.feasible
                && best_feasible.is_none_or(|b| {
                    let f = &evaluated[b];
                    better((a.score, a.step, a.endpoint), (f.score, f.step, f.endpoint))
                })
        })
        .map(|a| a.direction)
        .collect();
    state.record(events);

    let feasible_move = |evaluated: Vec<ScoredAction>| match best_feasible {
        Some(i) => MyopicDecision {
            waypoints: vec![x_k, evaluated[i].endpoint],
            evaluated,
            stalled: false,
            jumped: false,
        },
        None => MyopicDecision {
            waypoints: vec![x_k],
            evaluated,
            stalled: true,
            jumped: false,
        },
    };

    let Some(top) = best_any else {
        return Ok(feasible_move(evaluated));
    };
    if evaluated[top].feasible || state.count(evaluated[top].direction) < state.n_jump {
        return Ok(feasible_move(evaluated));
    }
    let dir = evaluated[top].direction;
    let heading = actions.directions[dir];
    let route = first_free_along(
        grid,
        evaluated[top].endpoint,
        heading,
        10.0 * actions.max_step(),
    )
    .and_then(|target| shortest_path(grid, x_k, target));
    match route {
        Some(waypoints) => {
            state.reset(dir);
            log::debug!(
                "jumping towards heading {heading} through {} waypoints",
                waypoints.len()
            );
            Ok(MyopicDecision {
                waypoints,
                evaluated,
                stalled: false,
                jumped: true,
            })
        }
        None => {
            log::debug!("jump target at heading {heading} unreachable; taking best feasible move");
            Ok(feasible_move(evaluated))
        }
    }
}

/// Weighted, min-max normalised combination of success rate (higher is
/// better) and mean search time (lower is better). A component whose values
/// are all equal scores 1 for every configuration.
pub fn skill_score(sr: &[f64], mst: &[f64], w_sr: f64, w_mst: f64) -> Result<Vec<f64>> {
    if sr.is_empty() || sr.len() != mst.len() {
        return Err(Error::Caller(
            "skill score needs matching, non-empty inputs".into(),
        ));
    }
    let range = |v: &[f64]| {
        v.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            })
    };
    let (sr_lo, sr_hi) = range(sr);
    let (mst_lo, mst_hi) = range(mst);
    Ok(sr
        .iter()
        .zip(mst)
        .map(|(&s, &m)| {
            let s_sr = if sr_hi > sr_lo {
                (s - sr_lo) / (sr_hi - sr_lo)
            } else {
                1.0
            };
            let s_mst = if mst_hi > mst_lo {
                (mst_hi - m) / (mst_hi - mst_lo)
            } else {
                1.0
            };
            w_sr * s_sr + w_mst * s_mst
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{LogNormalSensor, Reading};
    use crate::plume::SourceTerm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sensor() -> LogNormalSensor {
        LogNormalSensor::new(0.3, 0.01, 2.5).unwrap()
    }

    fn prior_like(seed: u64) -> ParticleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = crate::inference::PriorSpec {
            x: crate::inference::Dist::Normal {
                mean: 100.0,
                std: 30.0,
            },
            y: crate::inference::Dist::Normal {
                mean: 100.0,
                std: 30.0,
            },
            ..Default::default()
        };
        crate::inference::init_prior(&spec, 400, 0.5, 0.01, &mut rng).unwrap()
    }

    fn open_map() -> OccupancyGrid {
        OccupancyGrid::new(40, 40, 5.0, WorldPoint::default()).unwrap()
    }

    #[test]
    fn sixteen_candidates_on_open_map() {
        let g = open_map();
        let ps = prior_like(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = entrotaxis_step(
            &ps,
            &sensor(),
            WorldPoint::new(100.0, 100.0),
            &g,
            &MyopicActionSet::default(),
            10,
            false,
            &mut rng,
        )
        .unwrap();
        assert_eq!(d.evaluated.len(), 16);
        assert!(!d.stalled);
        assert!(g.segment_free(d.waypoints[0], d.target()));
    }

    #[test]
    fn wall_to_the_east_removes_east_moves() {
        let mut g = open_map();
        g.fill_rect(
            WorldPoint::new(105.0, 0.0),
            WorldPoint::new(110.0, 200.0),
            true,
        );
        let ps = prior_like(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = WorldPoint::new(100.0, 100.0);
        let d = entrotaxis_step(
            &ps,
            &sensor(),
            x,
            &g,
            &MyopicActionSet::default(),
            10,
            false,
            &mut rng,
        )
        .unwrap();
        // Headings 315, 0 and 45 cross the wall at both step sizes.
        assert_eq!(d.evaluated.len(), 10);
        assert!(d.evaluated.iter().all(|a| a.endpoint.x < 105.0));
    }

    #[test]
    fn fully_blocked_stalls_in_place() {
        let mut g = OccupancyGrid::new(3, 3, 5.0, WorldPoint::default()).unwrap();
        for c in g.clone().free_cells() {
            if c.row != 1 || c.col != 1 {
                g.set_occupied(c, true);
            }
        }
        let ps = prior_like(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = WorldPoint::new(7.5, 7.5);
        let d = entrotaxis_step(
            &ps,
            &sensor(),
            x,
            &g,
            &MyopicActionSet::default(),
            10,
            false,
            &mut rng,
        )
        .unwrap();
        assert!(d.stalled);
        assert_eq!(d.target(), x);
    }

    #[test]
    fn seeded_choice_reproducible_and_jump_matches_on_open_map() {
        let g = open_map();
        let ps = prior_like(3);
        let x = WorldPoint::new(60.0, 80.0);
        let actions = MyopicActionSet::default();
        let plain = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            entrotaxis_step(&ps, &sensor(), x, &g, &actions, 20, false, &mut rng).unwrap()
        };
        assert_eq!(plain(9).target(), plain(9).target());
        let mut state = JumpState::new(4, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let j = jump_step(
            &ps,
            &sensor(),
            x,
            &g,
            &actions,
            &mut state,
            20,
            false,
            &mut rng,
        )
        .unwrap();
        assert_eq!(j.target(), plain(9).target());
        assert_eq!(state.count(0), 0);
    }

    /// Exponential tilt towards particle 0 that sharpens with the
    /// candidate's x coordinate: under uniform weights the posterior entropy
    /// falls as x grows, so the easternmost move always scores best.
    struct EastPull;

    impl SensorModel for EastPull {
        fn predict(&self, ps: &ParticleSet, pos: WorldPoint, out: &mut Vec<f64>) {
            out.clear();
            out.extend((0..ps.len()).map(|i| pos.x * i as f64));
        }
        fn log_likelihood(&self, _r: &Reading, p: f64) -> f64 {
            -1e-2 * p
        }
        fn sample(&self, _p: f64, _eps: f64) -> Reading {
            Reading {
                value: 1.0,
                detected: true,
            }
        }
    }

    #[test]
    fn jump_after_repeated_blocked_argmin() {
        // Wall east of the robot, open at the top; the scripted utility
        // always prefers heading 0 (east).
        let mut g = OccupancyGrid::new(40, 40, 5.0, WorldPoint::default()).unwrap();
        g.fill_rect(
            WorldPoint::new(110.0, 0.0),
            WorldPoint::new(120.0, 150.0),
            true,
        );
        let particles: Vec<SourceTerm> = (0..8)
            .map(|i| SourceTerm::new(i as f64, 0.0, 1.0, 1.0, 1.0, 270.0, 1.0, 8.0).unwrap())
            .collect();
        let ps = ParticleSet::from_particles(particles, vec![1.0; 8], 0.5, [0.0; 8]).unwrap();
        let model = EastPull;
        let actions = MyopicActionSet::default();
        let mut state = JumpState::new(4, 10).unwrap();
        let x = WorldPoint::new(102.0, 60.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in 1..=4 {
            let d = jump_step(&ps, &model, x, &g, &actions, &mut state, 4, true, &mut rng).unwrap();
            let top = pick(&d.evaluated, false).unwrap();
            assert_eq!(d.evaluated[top].direction, 0);
            assert!(!d.evaluated[top].feasible);
            if k < 4 {
                assert!(!d.jumped, "jumped early at {k}");
                assert_eq!(state.count(0), k);
            } else {
                assert!(d.jumped);
                assert_eq!(state.count(0), 0);
                assert!(d.waypoints.windows(2).all(|w| g.segment_free(w[0], w[1])));
                assert!(d.target().x >= 120.0);
                assert!(d.waypoints.iter().any(|p| p.y >= 150.0));
            }
        }
    }

    #[test]
    fn history_is_bounded() {
        let mut s = JumpState::new(4, 10).unwrap();
        for k in 0..50 {
            s.record(vec![k % 8, 3]);
            assert!(s.history_len() <= 10);
        }
        assert_eq!(s.count(3), 10);
    }

    #[test]
    fn skill_score_examples() {
        let s = skill_score(&[0.5, 1.0], &[2000.0, 1000.0], 0.5, 0.5).unwrap();
        assert_eq!(s, vec![0.0, 1.0]);
        let s = skill_score(&[0.2, 0.9, 0.5], &[1500.0, 900.0, 1200.0], 0.5, 0.5).unwrap();
        assert_eq!(s[1], 1.0);
        let s = skill_score(&[0.7; 4], &[1000.0; 4], 0.5, 0.5).unwrap();
        assert!(s.iter().all(|&v| v == 1.0));
        assert!(skill_score(&[], &[], 0.5, 0.5).is_err());
    }

    #[test]
    fn skill_score_affine_invariant_in_search_time() {
        let sr = [0.3, 0.6, 0.9, 0.5];
        let mst = [1800.0, 1200.0, 1500.0, 900.0];
        let a = skill_score(&sr, &mst, 0.5, 0.5).unwrap();
        let scaled: Vec<f64> = mst.iter().map(|m| 3.0 * m + 250.0).collect();
        let b = skill_score(&sr, &scaled, 0.5, 0.5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
