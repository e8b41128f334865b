//! Single-batch informed tree planner.
//!
//! One batch of samples is drawn from the sampling distribution, a tree is
//! grown from the robot towards the current source estimate in order of
//! estimated solution cost, and the result is groomed to a fixed number of
//! candidate sampling locations: pruned to the informed set once a solution
//! exists, then either topped up with extra samples around the solution
//! ("blossom") or truncated to its cheapest vertices ("cull").

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::distr::Distribution;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Cell, OccupancyGrid, WorldPoint};
use crate::windfield::SampleDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    /// Samples per batch.
    pub batch_size: usize,
    /// Goal set size: nearest samples to the source estimate.
    pub goal_neighbours: usize,
    /// Number of candidate paths handed to the utility.
    pub candidates: usize,
    /// Connection radius scale.
    pub kappa: f64,
    pub dimension: usize,
    /// Longest admissible candidate path, metres.
    pub max_path_length: f64,
    /// Reuse one sample batch across planning steps instead of redrawing.
    pub recycle_samples: bool,
    /// Rebuild the sampling distribution when the wind estimate drifts by more than this (degrees).
    pub rebuild_threshold_deg: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            batch_size: 4000,
            goal_neighbours: 5,
            candidates: 16,
            kappa: 1.1,
            dimension: 2,
            max_path_length: f64::INFINITY,
            recycle_samples: false,
            rebuild_threshold_deg: 15.0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidates < 1 || self.batch_size < self.candidates {
            return Err(Error::Config(format!(
                "planner needs batch_size >= candidates >= 1 (got {} and {})",
                self.batch_size, self.candidates
            )));
        }
        if self.goal_neighbours < 1 || self.goal_neighbours > self.batch_size {
            return Err(Error::Config(
                "goal_neighbours must lie in [1, batch_size]".into(),
            ));
        }
        if !(self.kappa >= 1.0) {
            return Err(Error::Config(format!(
                "kappa must be >= 1, got {}",
                self.kappa
            )));
        }
        if self.dimension != 2 {
            return Err(Error::Config(
                "only planar planning (dimension = 2) is supported".into(),
            ));
        }
        if !(self.max_path_length > 0.0) {
            return Err(Error::Config("max_path_length must be positive".into()));
        }
        if !(self.rebuild_threshold_deg >= 0.0) {
            return Err(Error::Config("rebuild_threshold_deg must be >= 0".into()));
        }
        Ok(())
    }
}

/// Volume of the unit ball in `n` dimensions.
fn unit_ball_volume(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    PI.powf(h) / statrs::function::gamma::gamma(h + 1.0)
}

/// Connection radius of the random geometric graph over `m` states in a
/// region of Lebesgue measure `measure`.
pub fn rgg_radius(m: f64, measure: f64, kappa: f64, n: usize) -> f64 {
    let nf = n as f64;
    let m = m.max(2.0);
    2.0 * kappa
        * (1.0 + 1.0 / nf).powf(1.0 / nf)
        * (measure / unit_ball_volume(n)).powf(1.0 / nf)
        * (m.ln() / m).powf(1.0 / nf)
}

/// A root-to-vertex path through the tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePath {
    pub waypoints: Vec<WorldPoint>,
    pub length: f64,
}

impl CandidatePath {
    pub fn new(waypoints: Vec<WorldPoint>) -> Self {
        assert!(!waypoints.is_empty(), "a path needs at least one waypoint");
        let length = waypoints.windows(2).map(|w| w[0].distance(&w[1])).sum();
        Self { waypoints, length }
    }

    pub fn terminal(&self) -> WorldPoint {
        *self.waypoints.last().unwrap()
    }
}

/// Rooted tree; vertex 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    points: Vec<WorldPoint>,
    parent: Vec<Option<usize>>,
    cost: Vec<f64>,
    goal_set: Vec<WorldPoint>,
    goal_estimate: WorldPoint,
    /// Cheapest root-to-goal-set cost and the goal member reaching it.
    c_best: f64,
    best_goal: Option<WorldPoint>,
}

impl Tree {
    fn with_root(root: WorldPoint, goal_estimate: WorldPoint, goal_set: Vec<WorldPoint>) -> Self {
        Self {
            points: vec![root],
            parent: vec![None],
            cost: vec![0.0],
            goal_set,
            goal_estimate,
            c_best: f64::INFINITY,
            best_goal: None,
        }
    }

    pub fn root(&self) -> WorldPoint {
        self.points[0]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[WorldPoint] {
        &self.points
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn costs(&self) -> &[f64] {
        &self.cost
    }

    pub fn goal_set(&self) -> &[WorldPoint] {
        &self.goal_set
    }

    pub fn c_best(&self) -> f64 {
        self.c_best
    }

    pub fn best_goal(&self) -> Option<WorldPoint> {
        self.best_goal
    }

    /// Admissible cost-to-go: distance to the nearest goal-set member.
    pub fn h_hat(&self, p: WorldPoint) -> f64 {
        if self.goal_set.is_empty() {
            return p.distance(&self.goal_estimate);
        }
        self.goal_set
            .iter()
            .map(|g| p.distance(g))
            .fold(f64::INFINITY, f64::min)
    }

    /// Admissible solution cost through `p`.
    pub fn f_hat(&self, p: WorldPoint) -> f64 {
        p.distance(&self.root()) + self.h_hat(p)
    }

    fn children(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.len()];
        for (v, p) in self.parent.iter().enumerate() {
            if let Some(p) = p {
                ch[*p].push(v);
            }
        }
        ch
    }

    /// Keeps the vertices flagged in `keep` (root always kept) that remain
    /// connected to the root, renumbering them in their current order.
    fn retain(&mut self, keep: &[bool]) {
        let ch = self.children();
        let mut reach = vec![false; self.len()];
        let mut queue = VecDeque::from([0usize]);
        reach[0] = true;
        while let Some(v) = queue.pop_front() {
            for &c in &ch[v] {
                if keep[c] && !reach[c] {
                    reach[c] = true;
                    queue.push_back(c);
                }
            }
        }
        let mut map = vec![usize::MAX; self.len()];
        let mut next = 0;
        for (v, m) in map.iter_mut().enumerate() {
            if reach[v] {
                *m = next;
                next += 1;
            }
        }
        let mut points = Vec::with_capacity(next);
        let mut parent = Vec::with_capacity(next);
        let mut cost = Vec::with_capacity(next);
        for v in 0..self.len() {
            if reach[v] {
                points.push(self.points[v]);
                parent.push(self.parent[v].map(|p| map[p]));
                cost.push(self.cost[v]);
            }
        }
        self.points = points;
        self.parent = parent;
        self.cost = cost;
    }

    /// Checks connectivity, acyclicity, cost bookkeeping and edge feasibility.
    pub fn check_invariants(&self, grid: &OccupancyGrid) -> std::result::Result<(), String> {
        if self.points.is_empty() || self.parent[0].is_some() || self.cost[0] != 0.0 {
            return Err("root must be vertex 0 with zero cost and no parent".into());
        }
        let n = self.len();
        if self.parent.len() != n || self.cost.len() != n {
            return Err("inconsistent array lengths".into());
        }
        let mut edges = 0;
        for v in 1..n {
            let p = self.parent[v].ok_or_else(|| format!("vertex {v} has no parent"))?;
            if p >= n {
                return Err(format!("vertex {v} has out-of-range parent {p}"));
            }
            edges += 1;
            let expected = self.cost[p] + self.points[p].distance(&self.points[v]);
            if (expected - self.cost[v]).abs() > 1e-9 * expected.max(1.0) {
                return Err(format!(
                    "cost of vertex {v} is {} but parent implies {expected}",
                    self.cost[v]
                ));
            }
            if !grid.segment_free(self.points[p], self.points[v]) {
                return Err(format!("edge {p} -> {v} collides"));
            }
            if self.cost[v] + 1e-9 < self.points[0].distance(&self.points[v]) {
                return Err(format!("vertex {v} cost below straight-line distance"));
            }
            // Walking up must reach the root within n steps.
            let mut u = v;
            let mut steps = 0;
            while let Some(q) = self.parent[u] {
                u = q;
                steps += 1;
                if steps > n {
                    return Err(format!("cycle through vertex {v}"));
                }
            }
        }
        if edges != n - 1 {
            return Err("edge count differs from vertex count minus one".into());
        }
        Ok(())
    }

    /// One row per vertex: `vertex,parent,x,y,cost` (parent empty for the root).
    pub fn write_csv<W: Write>(&self, mut out: W, step: Option<usize>) -> std::io::Result<()> {
        for v in 0..self.len() {
            let parent = self.parent[v].map(|p| p.to_string()).unwrap_or_default();
            let p = self.points[v];
            match step {
                Some(s) => writeln!(out, "{s},{v},{parent},{},{},{}", p.x, p.y, self.cost[v])?,
                None => writeln!(out, "{v},{parent},{},{},{}", p.x, p.y, self.cost[v])?,
            }
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = b"vertex,parent,x,y,cost\n".to_vec();
        self.write_csv(&mut buf, None)
            .map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, PartialEq)]
struct QueueKey {
    key: f64,
    tie: usize,
}

impl Eq for QueueKey {}

impl Ord for QueueKey {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .key
            .total_cmp(&self.key)
            .then_with(|| other.tie.cmp(&self.tie))
    }
}

impl PartialOrd for QueueKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Uniform bucket grid over a point set for radius queries.
struct Buckets {
    min: WorldPoint,
    size: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<usize>>,
}

impl Buckets {
    fn new(points: &[WorldPoint], size: f64) -> Self {
        let (mut lo, mut hi) = (
            WorldPoint::new(f64::INFINITY, f64::INFINITY),
            WorldPoint::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        );
        for p in points {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        if points.is_empty() {
            lo = WorldPoint::default();
            hi = WorldPoint::default();
        }
        // Never more than about four buckets per point.
        let area = ((hi.x - lo.x) * (hi.y - lo.y)).max(0.0);
        let size = size
            .max((area / (4.0 * points.len().max(1) as f64)).sqrt())
            .max(1e-9);
        let nx = ((hi.x - lo.x) / size).floor() as usize + 1;
        let ny = ((hi.y - lo.y) / size).floor() as usize + 1;
        let mut cells = vec![Vec::new(); nx * ny];
        let mut b = Self {
            min: lo,
            size,
            nx,
            ny,
            cells: Vec::new(),
        };
        for (i, p) in points.iter().enumerate() {
            let (cx, cy) = b.bucket(*p);
            cells[cy * nx + cx].push(i);
        }
        b.cells = cells;
        b
    }

    fn bucket(&self, p: WorldPoint) -> (usize, usize) {
        let cx = (((p.x - self.min.x) / self.size).floor().max(0.0) as usize).min(self.nx - 1);
        let cy = (((p.y - self.min.y) / self.size).floor().max(0.0) as usize).min(self.ny - 1);
        (cx, cy)
    }

    /// Indices within `r` of `p`, ascending.
    fn near(&self, points: &[WorldPoint], p: WorldPoint, r: f64, out: &mut Vec<usize>) {
        out.clear();
        let reach = (r / self.size).ceil() as isize;
        let (cx, cy) = self.bucket(p);
        let r2 = r * r;
        for dy in -reach..=reach {
            let y = cy as isize + dy;
            if y < 0 || y >= self.ny as isize {
                continue;
            }
            for dx in -reach..=reach {
                let x = cx as isize + dx;
                if x < 0 || x >= self.nx as isize {
                    continue;
                }
                for &i in &self.cells[y as usize * self.nx + x as usize] {
                    if points[i].distance_sq(&p) <= r2 {
                        out.push(i);
                    }
                }
            }
        }
        out.sort_unstable();
    }
}

/// Indices of the `k` samples nearest to `target` (ties by index).
fn nearest_k(samples: &[WorldPoint], target: WorldPoint, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    let key = |i: &usize| (samples[*i].distance_sq(&target), *i);
    let k = k.min(idx.len());
    if k == 0 {
        return Vec::new();
    }
    idx.select_nth_unstable_by(k - 1, |a, b| {
        let (da, ia) = key(a);
        let (db, ib) = key(b);
        da.total_cmp(&db).then(ia.cmp(&ib))
    });
    idx.truncate(k);
    idx.sort_by(|a, b| {
        let (da, ia) = key(a);
        let (db, ib) = key(b);
        da.total_cmp(&db).then(ia.cmp(&ib))
    });
    idx
}

/// Grows a tree from `root` over `samples` towards the goal set around
/// `goal_estimate`, expanding vertices in order of estimated solution cost
/// and stopping as soon as a goal-set member is connected.
pub fn expand_tree(
    samples: &[WorldPoint],
    root: WorldPoint,
    goal_estimate: WorldPoint,
    grid: &OccupancyGrid,
    cfg: &PlannerConfig,
) -> Result<Tree> {
    if !grid.is_free(root) {
        return Err(Error::Caller(format!(
            "tree root {root:?} is not in free space"
        )));
    }
    let goal_idx = nearest_k(samples, goal_estimate, cfg.goal_neighbours);
    let goal_set: Vec<WorldPoint> = goal_idx.iter().map(|&i| samples[i]).collect();
    let mut tree = Tree::with_root(root, goal_estimate, goal_set);
    if samples.is_empty() {
        return Ok(tree);
    }

    // Node 0 is the root, node i + 1 is sample i.
    let n = samples.len() + 1;
    let mut pts = Vec::with_capacity(n);
    pts.push(root);
    pts.extend_from_slice(samples);
    let h: Vec<f64> = pts.iter().map(|p| tree.h_hat(*p)).collect();
    let f: Vec<f64> = pts
        .iter()
        .zip(&h)
        .map(|(p, hh)| p.distance(&root) + hh)
        .collect();
    let is_goal = {
        let mut g = vec![false; n];
        for &i in &goal_idx {
            g[i + 1] = true;
        }
        g
    };

    let radius = rgg_radius(
        samples.len() as f64,
        grid.free_area(),
        cfg.kappa,
        cfg.dimension,
    );
    let buckets = Buckets::new(&pts, radius.max(grid.cell_size()));

    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut in_tree = vec![false; n];
    g[0] = 0.0;
    in_tree[0] = true;

    let mut qv = BinaryHeap::new();
    let mut inserted = 0usize;
    qv.push((
        QueueKey {
            key: f[0],
            tie: inserted,
        },
        0usize,
    ));
    let mut near = Vec::new();
    let mut edges: Vec<(f64, usize, f64)> = Vec::new();
    let mut goal_reached = false;

    while !goal_reached {
        let Some((_, v)) = qv.pop() else { break };
        buckets.near(&pts, pts[v], radius, &mut near);
        edges.clear();
        for &w in &near {
            if w == v || w == 0 {
                continue;
            }
            let c_hat = pts[v].distance(&pts[w]);
            edges.push((c_hat + h[w], w, c_hat));
        }
        edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, w, c_hat) in &edges {
            let through = g[v] + c_hat;
            if through >= g[w] {
                continue;
            }
            if !grid.segment_free(pts[v], pts[w]) {
                continue;
            }
            if in_tree[w] {
                let old = parent[w];
                children[old].retain(|&c| c != w);
            } else {
                in_tree[w] = true;
                inserted += 1;
                qv.push((
                    QueueKey {
                        key: f[w],
                        tie: inserted,
                    },
                    w,
                ));
            }
            parent[w] = v;
            children[v].push(w);
            g[w] = through;
            propagate(w, &pts, &parent, &children, &mut g);
            if is_goal[w] {
                goal_reached = true;
            }
        }
    }

    // Compact: tree vertices in node order.
    let mut map = vec![usize::MAX; n];
    for v in 1..n {
        if in_tree[v] {
            map[v] = tree.points.len();
            tree.points.push(pts[v]);
            tree.cost.push(g[v]);
            tree.parent.push(None);
        }
    }
    map[0] = 0;
    for v in 1..n {
        if in_tree[v] {
            tree.parent[map[v]] = Some(map[parent[v]]);
        }
    }
    for &gi in &goal_idx {
        let node = gi + 1;
        if in_tree[node] && g[node] < tree.c_best {
            tree.c_best = g[node];
            tree.best_goal = Some(pts[node]);
        }
    }
    Ok(tree)
}

/// Recomputes costs below `w` after its parent changed.
fn propagate(
    w: usize,
    pts: &[WorldPoint],
    parent: &[usize],
    children: &[Vec<usize>],
    g: &mut [f64],
) {
    let mut stack: Vec<usize> = children[w].clone();
    while let Some(c) = stack.pop() {
        let p = parent[c];
        g[c] = g[p] + pts[p].distance(&pts[c]);
        stack.extend_from_slice(&children[c]);
    }
}

/// Removes every vertex whose estimated solution cost exceeds `c_best`,
/// along with everything below it. No-op without a solution.
pub fn prune(tree: &mut Tree) {
    let c_best = tree.c_best;
    if !c_best.is_finite() {
        return;
    }
    let keep: Vec<bool> = tree
        .points
        .iter()
        .map(|&p| tree.f_hat(p) <= c_best)
        .collect();
    tree.retain(&keep);
}

/// Lebesgue measure of the informed set for a solution of cost `c`.
fn informed_measure(tree: &Tree, c: f64, grid: &OccupancyGrid) -> f64 {
    match tree.best_goal {
        Some(goal) if c.is_finite() => {
            let c_min = tree.root().distance(&goal);
            let conj = (c * c - c_min * c_min).max(0.0).sqrt();
            (PI / 4.0 * c * conj).min(grid.free_area())
        }
        _ => grid.free_area(),
    }
}

/// Free cells overlapping the region where `f_hat <= bound`, with their
/// sampling weights, for restricted draws.
fn region_sampler(
    tree: &Tree,
    bound: f64,
    dist: &SampleDistribution,
    grid: &OccupancyGrid,
) -> Option<(Vec<Cell>, WeightedAliasIndex<f64>)> {
    let root = tree.root();
    let foci: Vec<WorldPoint> = if tree.goal_set.is_empty() {
        vec![tree.goal_estimate]
    } else {
        tree.goal_set.clone()
    };
    let o = grid.origin();
    let cs = grid.cell_size();
    let mut rows = (usize::MAX, 0usize);
    let mut cols = (usize::MAX, 0usize);
    if bound.is_finite() {
        for g in &foci {
            // Every point of the ellipse lies within bound / 2 of the focal midpoint.
            let mid = WorldPoint::new(0.5 * (root.x + g.x), 0.5 * (root.y + g.y));
            let a = 0.5 * bound;
            let c_lo = ((mid.x - a - o.x) / cs).floor().max(0.0) as usize;
            let c_hi = (((mid.x + a - o.x) / cs).floor().max(0.0) as usize).min(grid.cols() - 1);
            let r_lo = ((mid.y - a - o.y) / cs).floor().max(0.0) as usize;
            let r_hi = (((mid.y + a - o.y) / cs).floor().max(0.0) as usize).min(grid.rows() - 1);
            cols = (cols.0.min(c_lo), cols.1.max(c_hi));
            rows = (rows.0.min(r_lo), rows.1.max(r_hi));
        }
    } else {
        rows = (0, grid.rows() - 1);
        cols = (0, grid.cols() - 1);
    }
    if rows.0 > rows.1 || cols.0 > cols.1 {
        return None;
    }
    let mut cells = Vec::new();
    let mut weights = Vec::new();
    for r in rows.0..=rows.1 {
        for c in cols.0..=cols.1 {
            let cell = Cell::new(r, c);
            let w = dist.weight(grid, cell);
            if w > 0.0 {
                cells.push(cell);
                weights.push(w);
            }
        }
    }
    if cells.is_empty() {
        return None;
    }
    let alias = WeightedAliasIndex::new(weights).ok()?;
    Some((cells, alias))
}

/// Outcome of grooming the tree to the candidate count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GroomReport {
    pub blossomed: usize,
    pub culled: usize,
    /// Candidates missing after the blossom retry budget ran out.
    pub shortfall: usize,
}

/// Adds samples drawn from `dist` inside the expanded informed set
/// (`f_hat <= c_best + 2 sigma_loc`) until the tree has `cfg.candidates`
/// non-root vertices or `50 * cfg.candidates` draws have been spent.
pub fn blossom<R: Rng + ?Sized>(
    tree: &mut Tree,
    dist: &SampleDistribution,
    sigma_loc: f64,
    cfg: &PlannerConfig,
    grid: &OccupancyGrid,
    rng: &mut R,
) -> GroomReport {
    let target = cfg.candidates;
    let mut report = GroomReport::default();
    if tree.len() - 1 >= target {
        return report;
    }
    let bound = tree.c_best + 2.0 * sigma_loc.max(0.0);
    let Some((cells, alias)) = region_sampler(tree, bound, dist, grid) else {
        report.shortfall = target - (tree.len() - 1);
        log::debug!(
            "blossom region holds no free cells; {} candidates short",
            report.shortfall
        );
        return report;
    };
    let measure = informed_measure(tree, bound, grid).max(grid.cell_size() * grid.cell_size());
    let o = grid.origin();
    let cs = grid.cell_size();
    let budget = 50 * target;
    let mut draws = 0;
    let mut near: Vec<usize> = Vec::new();
    while tree.len() - 1 < target && draws < budget {
        draws += 1;
        let cell = cells[alias.sample(rng)];
        let x = WorldPoint::new(
            o.x + (cell.col as f64 + rng.random::<f64>()) * cs,
            o.y + (cell.row as f64 + rng.random::<f64>()) * cs,
        );
        if grid.cell_of(x) != Some(cell) || tree.f_hat(x) > bound {
            continue;
        }
        let r = rgg_radius(tree.len() as f64, measure, cfg.kappa, cfg.dimension).max(2.0 * cs);
        near.clear();
        near.extend((0..tree.len()).filter(|&v| tree.points[v].distance_sq(&x) <= r * r));
        near.sort_by(|&a, &b| {
            tree.points[a]
                .distance_sq(&x)
                .total_cmp(&tree.points[b].distance_sq(&x))
                .then(tree.cost[a].total_cmp(&tree.cost[b]))
                .then(a.cmp(&b))
        });
        let mut best: Option<(usize, f64)> = None;
        for &v in &near {
            let through = tree.cost[v] + tree.points[v].distance(&x);
            if best.is_some_and(|(_, g)| through >= g) {
                continue;
            }
            if grid.segment_free(tree.points[v], x) {
                best = Some((v, through));
            }
        }
        if let Some((v, g)) = best {
            tree.points.push(x);
            tree.parent.push(Some(v));
            tree.cost.push(g);
            report.blossomed += 1;
        }
    }
    let have = tree.len() - 1;
    if have < target {
        report.shortfall = target - have;
        log::debug!(
            "blossom stopped {} candidates short after {draws} draws",
            report.shortfall
        );
    }
    report
}

/// Keeps the `cfg.candidates` cheapest non-root vertices whose parents are
/// also kept.
pub fn cull(tree: &mut Tree, cfg: &PlannerConfig) -> GroomReport {
    let target = cfg.candidates;
    let mut report = GroomReport::default();
    if tree.len() - 1 <= target {
        return report;
    }
    let mut order: Vec<usize> = (1..tree.len()).collect();
    order.sort_by(|&a, &b| tree.cost[a].total_cmp(&tree.cost[b]).then(a.cmp(&b)));
    let mut keep = vec![false; tree.len()];
    keep[0] = true;
    let mut kept = 0;
    for v in order {
        if kept == target {
            break;
        }
        if let Some(p) = tree.parent[v] {
            if keep[p] {
                keep[v] = true;
                kept += 1;
            }
        }
    }
    let before = tree.len();
    tree.retain(&keep);
    report.culled = before - tree.len();
    report
}

/// Prunes to the informed set, then blossoms or culls to the candidate count.
pub fn groom<R: Rng + ?Sized>(
    tree: &mut Tree,
    dist: &SampleDistribution,
    sigma_loc: f64,
    cfg: &PlannerConfig,
    grid: &OccupancyGrid,
    rng: &mut R,
) -> GroomReport {
    prune(tree);
    if tree.len() - 1 < cfg.candidates {
        blossom(tree, dist, sigma_loc, cfg, grid, rng)
    } else {
        cull(tree, cfg)
    }
}

/// One path per non-root vertex, in vertex order, keeping those no longer
/// than `max_length`.
pub fn extract_paths(tree: &Tree, max_length: f64) -> Vec<CandidatePath> {
    let mut out = Vec::with_capacity(tree.len().saturating_sub(1));
    for v in 1..tree.len() {
        if tree.cost[v] > max_length {
            continue;
        }
        let mut pts = vec![tree.points[v]];
        let mut u = v;
        while let Some(p) = tree.parent[u] {
            pts.push(tree.points[p]);
            u = p;
        }
        pts.reverse();
        out.push(CandidatePath::new(pts));
    }
    out
}

/// Everything one planning step produces.
#[derive(Debug, Clone)]
pub struct PlanResult {
    pub tree: Tree,
    pub candidates: Vec<CandidatePath>,
    pub report: GroomReport,
}

/// Expands, grooms and extracts candidates from a prepared sample batch.
pub fn plan_from_samples<R: Rng + ?Sized>(
    samples: &[WorldPoint],
    root: WorldPoint,
    goal_estimate: WorldPoint,
    sigma_loc: f64,
    dist: &SampleDistribution,
    grid: &OccupancyGrid,
    cfg: &PlannerConfig,
    rng: &mut R,
) -> Result<PlanResult> {
    let mut tree = expand_tree(samples, root, goal_estimate, grid, cfg)?;
    let report = groom(&mut tree, dist, sigma_loc, cfg, grid, rng);
    let candidates = extract_paths(&tree, cfg.max_path_length);
    Ok(PlanResult {
        tree,
        candidates,
        report,
    })
}
