//! Wind-aware sampling distribution over free space.
//!
//! Two multi-source Dijkstra passes from the upwind boundary edge, one
//! through free space only and one ignoring obstacles, give the detour that
//! buildings impose on every free cell. Cells sitting in a building's wake
//! (large detour) receive low weight; cells with an unobstructed line from
//! the inlet receive the highest weight. Every free cell keeps a strictly
//! positive floor.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::path::Path;

use rand::distr::Distribution;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;

use crate::error::{Error, Result};
use crate::grid::{Cell, OccupancyGrid, WorldPoint};
use crate::plume::wind_unit;

/// Boundary edges of the map, in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    West,
    East,
    South,
    North,
}

impl Edge {
    const ALL: [Edge; 4] = [Edge::West, Edge::East, Edge::South, Edge::North];

    fn outward_normal(self) -> (f64, f64) {
        match self {
            Edge::West => (-1.0, 0.0),
            Edge::East => (1.0, 0.0),
            Edge::South => (0.0, -1.0),
            Edge::North => (0.0, 1.0),
        }
    }
}

/// The edge the wind enters through: outward normal most anti-parallel to
/// the direction the wind blows towards.
pub fn inlet_edge(phi: f64) -> Edge {
    let (wx, wy) = wind_unit(phi);
    let mut best = Edge::West;
    let mut best_dot = f64::INFINITY;
    for e in Edge::ALL {
        let (nx, ny) = e.outward_normal();
        let dot = nx * wx + ny * wy;
        if dot < best_dot - 1e-12 {
            best = e;
            best_dot = dot;
        }
    }
    best
}

/// All cells on the inlet edge for wind direction `phi`, occupied or not.
pub fn inlet_states(grid: &OccupancyGrid, phi: f64) -> Vec<Cell> {
    let (rows, cols) = (grid.rows(), grid.cols());
    match inlet_edge(phi) {
        Edge::West => (0..rows).map(|r| Cell::new(r, 0)).collect(),
        Edge::East => (0..rows).map(|r| Cell::new(r, cols - 1)).collect(),
        Edge::South => (0..cols).map(|c| Cell::new(0, c)).collect(),
        Edge::North => (0..cols).map(|c| Cell::new(rows - 1, c)).collect(),
    }
}

/// Per-cell shortest-path cost from a source set; `f64::INFINITY` where unreachable.
#[derive(Debug, Clone, PartialEq)]
pub struct CostField {
    rows: usize,
    cols: usize,
    costs: Vec<f64>,
}

impl CostField {
    pub fn get(&self, cell: Cell) -> f64 {
        self.costs[cell.row * self.cols + cell.col]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major costs.
    pub fn as_slice(&self) -> &[f64] {
        &self.costs
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    cost: f64,
    index: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on cost, then on index for deterministic expansion order.
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// True if moving from `cell` by `(dr, dc)` is allowed. Diagonal moves may
/// not squeeze between two cells when either of them is occupied.
fn step_allowed(grid: &OccupancyGrid, cell: Cell, next: Cell, dr: isize, dc: isize) -> bool {
    if grid.is_occupied(next) {
        return false;
    }
    if dr != 0 && dc != 0 {
        let a = Cell::new(next.row, cell.col);
        let b = Cell::new(cell.row, next.col);
        if grid.is_occupied(a) || grid.is_occupied(b) {
            return false;
        }
    }
    true
}

fn dijkstra_impl(
    grid: &OccupancyGrid,
    sources: &[Cell],
    respect_obstacles: bool,
    mut parents: Option<&mut Vec<usize>>,
) -> CostField {
    let n = grid.len();
    let cs = grid.cell_size();
    let diag = std::f64::consts::SQRT_2 * cs;
    let mut costs = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        if s.row >= grid.rows() || s.col >= grid.cols() {
            continue;
        }
        if respect_obstacles && grid.is_occupied(s) {
            continue;
        }
        let i = grid.index(s);
        if costs[i] > 0.0 {
            costs[i] = 0.0;
            heap.push(HeapItem {
                cost: 0.0,
                index: i,
            });
        }
    }
    while let Some(HeapItem { cost, index }) = heap.pop() {
        if cost > costs[index] {
            continue;
        }
        let cell = grid.cell_at(index);
        for (next, dr, dc) in grid.neighbours(cell) {
            if respect_obstacles && !step_allowed(grid, cell, next, dr, dc) {
                continue;
            }
            let step = if dr != 0 && dc != 0 { diag } else { cs };
            let j = grid.index(next);
            let candidate = cost + step;
            if candidate < costs[j] {
                costs[j] = candidate;
                if let Some(p) = parents.as_deref_mut() {
                    p[j] = index;
                }
                heap.push(HeapItem {
                    cost: candidate,
                    index: j,
                });
            }
        }
    }
    CostField {
        rows: grid.rows(),
        cols: grid.cols(),
        costs,
    }
}

/// Multi-source shortest-path costs over the 8-connected cell graph.
///
/// Axis steps cost `cell_size`, diagonal steps `sqrt(2) * cell_size`. With
/// `respect_obstacles` the search is restricted to free cells (occupied
/// sources are ignored) and diagonal corner-cutting is forbidden; otherwise
/// every cell is traversable.
pub fn dijkstra_cost(grid: &OccupancyGrid, sources: &[Cell], respect_obstacles: bool) -> CostField {
    dijkstra_impl(grid, sources, respect_obstacles, None)
}

/// Obstacle-respecting grid path from `from` to `to` as a waypoint list
/// starting at `from` and ending at `to`. Intermediate waypoints are cell
/// centres, shortcut wherever a straight segment is collision free. `None`
/// when either end is blocked or the cells are not connected.
pub fn shortest_path(
    grid: &OccupancyGrid,
    from: WorldPoint,
    to: WorldPoint,
) -> Option<Vec<WorldPoint>> {
    if !grid.is_free(from) || !grid.is_free(to) {
        return None;
    }
    let start = grid.cell_of(from)?;
    let goal = grid.cell_of(to)?;
    let mut parents = vec![usize::MAX; grid.len()];
    let field = dijkstra_impl(grid, &[start], true, Some(&mut parents));
    if !field.get(goal).is_finite() {
        return None;
    }
    let mut cells = vec![grid.index(goal)];
    let s = grid.index(start);
    while *cells.last().unwrap() != s {
        let p = parents[*cells.last().unwrap()];
        cells.push(p);
    }
    cells.reverse();
    let mut raw = Vec::with_capacity(cells.len() + 2);
    raw.push(from);
    // Skip the start and goal cell centres; the endpoints stand in for them.
    if cells.len() > 2 {
        raw.extend(
            cells[1..cells.len() - 1]
                .iter()
                .map(|&i| grid.cell_center(grid.cell_at(i))),
        );
    }
    raw.push(to);
    if raw.windows(2).any(|w| !grid.segment_free(w[0], w[1])) {
        // Fall back to the unsmoothed centre chain.
        raw.clear();
        raw.push(from);
        raw.extend(cells.iter().map(|&i| grid.cell_center(grid.cell_at(i))));
        raw.push(to);
    }
    Some(shortcut(grid, &raw))
}

fn shortcut(grid: &OccupancyGrid, pts: &[WorldPoint]) -> Vec<WorldPoint> {
    let mut out = vec![pts[0]];
    let mut i = 0;
    while i + 1 < pts.len() {
        let mut j = pts.len() - 1;
        while j > i + 1 && !grid.segment_free(pts[i], pts[j]) {
            j -= 1;
        }
        out.push(pts[j]);
        i = j;
    }
    out.dedup();
    out
}

/// Categorical weights over the free cells with an alias table for O(1) draws.
#[derive(Debug, Clone)]
pub struct SampleDistribution {
    /// Wind direction the weights were built for; `None` for the uniform distribution.
    phi: Option<f64>,
    /// Grid indices of the free cells, ascending.
    cells: Vec<usize>,
    /// Normalised weights, parallel to `cells`.
    weights: Vec<f64>,
    /// Normalised weight per grid cell (0 on obstacles).
    by_cell: Vec<f64>,
    alias: WeightedAliasIndex<f64>,
}

impl SampleDistribution {
    fn from_weights(
        grid: &OccupancyGrid,
        phi: Option<f64>,
        cells: Vec<usize>,
        raw: Vec<f64>,
    ) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::Config("map has no free cells".into()));
        }
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mut by_cell = vec![0.0; grid.len()];
        for (&i, &w) in cells.iter().zip(&weights) {
            by_cell[i] = w;
        }
        let alias = WeightedAliasIndex::new(weights.clone())
            .map_err(|e| Error::Config(format!("invalid sampling weights: {e}")))?;
        Ok(Self {
            phi,
            cells,
            weights,
            by_cell,
            alias,
        })
    }

    pub fn uniform(grid: &OccupancyGrid) -> Result<Self> {
        let cells: Vec<usize> = grid.free_cells().map(|c| grid.index(c)).collect();
        let raw = vec![1.0; cells.len()];
        Self::from_weights(grid, None, cells, raw)
    }

    pub fn phi(&self) -> Option<f64> {
        self.phi
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Normalised weight of a cell (0 for obstacles).
    pub fn weight(&self, grid: &OccupancyGrid, cell: Cell) -> f64 {
        self.by_cell[grid.index(cell)]
    }

    /// (grid index, weight) for every free cell.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.cells.iter().copied().zip(self.weights.iter().copied())
    }

    /// Draws one cell by weight and a uniform point inside it.
    pub fn draw<R: Rng + ?Sized>(&self, grid: &OccupancyGrid, rng: &mut R) -> WorldPoint {
        let cell = grid.cell_at(self.cells[self.alias.sample(rng)]);
        let o = grid.origin();
        let cs = grid.cell_size();
        loop {
            let p = WorldPoint::new(
                o.x + (cell.col as f64 + rng.random::<f64>()) * cs,
                o.y + (cell.row as f64 + rng.random::<f64>()) * cs,
            );
            // Rounding can push a point onto the far cell boundary.
            if grid.cell_of(p) == Some(cell) {
                return p;
            }
        }
    }

    /// Writes the per-cell weights as a `rows x cols` CSV, row 0 first.
    pub fn write_csv(&self, grid: &OccupancyGrid, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for r in 0..grid.rows() {
            let row: Vec<String> = (0..grid.cols())
                .map(|c| format!("{}", self.by_cell[grid.index(Cell::new(r, c))]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

/// Wind-aware distribution for wind direction `phi` (degrees, "from" bearing).
///
/// Per free cell the interruption `C_open - C_obs <= 0` is shifted by its
/// minimum and floored: `w = (C_open - C_obs) - min + eps` with
/// `eps = 0.05 * (max - min)`, or 1 when the field is flat. Cells that cannot
/// be reached from the inlet get weight `eps`.
pub fn build_distribution(grid: &OccupancyGrid, phi: f64) -> Result<SampleDistribution> {
    let cells: Vec<usize> = grid.free_cells().map(|c| grid.index(c)).collect();
    if cells.is_empty() {
        return Err(Error::Config("map has no free cells".into()));
    }
    let inlet = inlet_states(grid, phi);
    let (obs, open) = rayon::join(
        || dijkstra_cost(grid, &inlet, true),
        || dijkstra_cost(grid, &inlet, false),
    );
    let interruption: Vec<Option<f64>> = cells
        .iter()
        .map(|&i| {
            let c_obs = obs.costs[i];
            c_obs.is_finite().then(|| open.costs[i] - c_obs)
        })
        .collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in interruption.iter().flatten() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    let range = hi - lo;
    let eps = if range.is_finite() && range > 0.0 {
        0.05 * range
    } else {
        1.0
    };
    let raw: Vec<f64> = interruption
        .iter()
        .map(|v| match v {
            Some(v) => v - lo + eps,
            None => eps,
        })
        .collect();
    SampleDistribution::from_weights(grid, Some(crate::plume::normalize_degrees(phi)), cells, raw)
}

/// Draws `n` free-space points from `dist`.
pub fn draw_samples<R: Rng + ?Sized>(
    dist: &SampleDistribution,
    grid: &OccupancyGrid,
    n: usize,
    rng: &mut R,
) -> Vec<WorldPoint> {
    (0..n).map(|_| dist.draw(grid, rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn empty(rows: usize, cols: usize) -> OccupancyGrid {
        OccupancyGrid::new(rows, cols, 1.0, WorldPoint::default()).unwrap()
    }

    #[test]
    fn inlet_edges() {
        let g = empty(10, 20);
        let west = inlet_states(&g, 270.0);
        assert_eq!(west.len(), 10);
        assert!(west.iter().all(|c| c.col == 0));
        assert!(inlet_states(&g, 90.0).iter().all(|c| c.col == 19));
        for phi in [226.5, 270.0 + 44.0, 250.0] {
            assert_eq!(inlet_edge(phi), Edge::West, "phi {phi}");
        }
        // Wind from the south enters through the south edge (row 0).
        assert!(inlet_states(&g, 180.0).iter().all(|c| c.row == 0));
        assert!(inlet_states(&g, 0.0).iter().all(|c| c.row == 9));
    }

    #[test]
    fn line_metric_on_strip() {
        let g = OccupancyGrid::new(1, 10, 2.5, WorldPoint::default()).unwrap();
        let f = dijkstra_cost(&g, &[Cell::new(0, 0)], true);
        for k in 0..10 {
            assert!((f.get(Cell::new(0, k)) - 2.5 * k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn detour_around_single_wall_cell() {
        let mut g = empty(5, 5);
        g.set_occupied(Cell::new(2, 2), true);
        let f = dijkstra_cost(&g, &[Cell::new(2, 0)], true);
        // Straight line blocked at (2,2): best route to (2,4) is two axis steps
        // plus two diagonals that avoid touching the wall's corners.
        let expected = 2.0 + 2.0 * std::f64::consts::SQRT_2;
        assert!(
            (f.get(Cell::new(2, 4)) - expected).abs() < 1e-12,
            "{}",
            f.get(Cell::new(2, 4))
        );
        assert!(f.get(Cell::new(2, 2)).is_infinite());
    }

    #[test]
    fn walled_region_unreachable() {
        let mut g = empty(6, 6);
        for k in 0..6 {
            g.set_occupied(Cell::new(k, 3), true);
        }
        let f = dijkstra_cost(&g, &[Cell::new(0, 0)], true);
        assert!(f.get(Cell::new(5, 5)).is_infinite());
        let open = dijkstra_cost(&g, &[Cell::new(0, 0)], false);
        assert!((open.get(Cell::new(5, 5)) - 5.0 * std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn obstacles_never_shorten_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = empty(30, 30);
        for c in g.clone().free_cells() {
            if c.col > 0 && rng.random::<f64>() < 0.25 {
                g.set_occupied(c, true);
            }
        }
        let inlet = inlet_states(&g, 270.0);
        let obs = dijkstra_cost(&g, &inlet, true);
        let open = dijkstra_cost(&g, &inlet, false);
        for c in g.free_cells() {
            if obs.get(c).is_finite() {
                assert!(obs.get(c) >= open.get(c) - 1e-9);
            }
        }
    }

    #[test]
    fn empty_map_gives_uniform_distribution() {
        let g = empty(8, 12);
        let d = build_distribution(&g, 270.0).unwrap();
        let w0 = 1.0 / 96.0;
        for (_, w) in d.iter() {
            assert!((w - w0).abs() < 1e-15);
        }
    }

    #[test]
    fn lee_strip_is_darker_than_open_strip() {
        // 40 x 40 map, block rows 15..25, cols 10..14, wind towards +x.
        let mut g = empty(40, 40);
        g.fill_rect(
            WorldPoint::new(10.0, 15.0),
            WorldPoint::new(14.0, 25.0),
            true,
        );
        let d = build_distribution(&g, 270.0).unwrap();
        let mean = |rows: std::ops::Range<usize>| {
            let mut s = 0.0;
            let mut n = 0;
            for r in rows {
                for c in 14..30 {
                    s += d.weight(&g, Cell::new(r, c));
                    n += 1;
                }
            }
            s / n as f64
        };
        let lee = mean(15..25);
        let open = mean(28..38);
        assert!(lee < open, "lee {lee} open {open}");
        assert!(d.iter().all(|(_, w)| w > 0.0));
        let total: f64 = d.iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_free_cells_is_config_error() {
        let mut g = empty(2, 2);
        g.fill_rect(WorldPoint::new(0.0, 0.0), WorldPoint::new(2.0, 2.0), true);
        assert!(matches!(
            build_distribution(&g, 270.0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            SampleDistribution::uniform(&g),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn two_cell_uniform_counts() {
        let mut g = empty(1, 3);
        g.set_occupied(Cell::new(0, 1), true);
        let d = SampleDistribution::uniform(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let left = draw_samples(&d, &g, n, &mut rng)
            .iter()
            .filter(|p| p.x < 1.0)
            .count();
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((left as f64 - 5000.0).abs() < 3.0 * sigma, "left {left}");
    }

    #[test]
    fn samples_always_free_and_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g = empty(25, 25);
        for c in g.clone().free_cells() {
            if rng.random::<f64>() < 0.3 {
                g.set_occupied(c, true);
            }
        }
        let d = build_distribution(&g, 300.0).unwrap();
        let pts = draw_samples(&d, &g, 100_000, &mut rng);
        assert!(pts.iter().all(|&p| g.is_free(p)));
        let a = draw_samples(&d, &g, 50, &mut ChaCha8Rng::seed_from_u64(9));
        let b = draw_samples(&d, &g, 50, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn empirical_frequencies_match_weights() {
        let mut g = empty(4, 4);
        g.set_occupied(Cell::new(1, 1), true);
        g.set_occupied(Cell::new(2, 1), true);
        let d = build_distribution(&g, 270.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 100_000;
        let mut counts = vec![0usize; g.len()];
        for p in draw_samples(&d, &g, n, &mut rng) {
            counts[g.index(g.cell_of(p).unwrap())] += 1;
        }
        let mut chi2 = 0.0;
        let mut dof = 0;
        for (i, w) in d.iter() {
            let e = w * n as f64;
            chi2 += (counts[i] as f64 - e).powi(2) / e;
            dof += 1;
        }
        // 13 degrees of freedom; 99.9th percentile is about 34.5.
        assert_eq!(dof, 14);
        assert!(chi2 < 34.5, "chi2 {chi2}");
    }

    #[test]
    fn shortest_path_goes_around_wall() {
        let mut g = empty(20, 20);
        g.fill_rect(WorldPoint::new(9.0, 0.0), WorldPoint::new(11.0, 15.0), true);
        let from = WorldPoint::new(5.5, 5.5);
        let to = WorldPoint::new(15.5, 5.5);
        let path = shortest_path(&g, from, to).unwrap();
        assert_eq!(path[0], from);
        assert_eq!(*path.last().unwrap(), to);
        assert!(path.windows(2).all(|w| g.segment_free(w[0], w[1])));
        assert!(path.iter().any(|p| p.y > 15.0));
        // Fully enclosed target.
        let mut boxed = empty(10, 10);
        for k in 3..8 {
            boxed.set_occupied(Cell::new(3, k), true);
            boxed.set_occupied(Cell::new(7, k), true);
            boxed.set_occupied(Cell::new(k, 3), true);
            boxed.set_occupied(Cell::new(k, 7), true);
        }
        assert!(
            shortest_path(&boxed, WorldPoint::new(0.5, 0.5), WorldPoint::new(5.5, 5.5)).is_none()
        );
    }

    #[test]
    fn distribution_dump() {
        let g = empty(3, 4);
        let d = SampleDistribution::uniform(&g).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        d.write_csv(&g, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().all(|l| l.split(',').count() == 4));
    }
}
