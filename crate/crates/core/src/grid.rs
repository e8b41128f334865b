//! Occupancy grid world model.
//!
//! The grid partitions a rectangular domain into square cells; each cell is
//! either free or occupied. Anything outside the domain is treated as
//! occupied, so the robot can never leave the search area.
//!
//! Collision checks are conservative: a segment collides if it touches the
//! closed square of any occupied cell, including a bare corner contact.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A position in world coordinates (metres).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &WorldPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_sq(&self, other: &WorldPoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Row/column index of a grid cell. Row 0 holds the smallest y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    rows: usize,
    cols: usize,
    cell_size: f64,
    origin: WorldPoint,
    /// Row-major, `true` = obstacle.
    cells: Vec<bool>,
}

impl OccupancyGrid {
    /// An obstacle-free grid.
    pub fn new(rows: usize, cols: usize, cell_size: f64, origin: WorldPoint) -> Result<Self> {
        Self::from_cells(rows, cols, cell_size, origin, vec![false; rows * cols])
    }

    pub fn from_cells(
        rows: usize,
        cols: usize,
        cell_size: f64,
        origin: WorldPoint,
        cells: Vec<bool>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config(format!(
                "grid must be non-empty, got {rows}x{cols}"
            )));
        }
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::Config(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        if !origin.is_finite() {
            return Err(Error::Config("grid origin must be finite".into()));
        }
        if cells.len() != rows * cols {
            return Err(Error::Config(format!(
                "expected {} cells, got {}",
                rows * cols,
                cells.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            cell_size,
            origin,
            cells,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> WorldPoint {
        self.origin
    }

    pub fn width(&self) -> f64 {
        self.cols as f64 * self.cell_size
    }

    pub fn height(&self) -> f64 {
        self.rows as f64 * self.cell_size
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    #[inline]
    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.cols + cell.col
    }

    #[inline]
    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index / self.cols, index % self.cols)
    }

    pub fn is_occupied(&self, cell: Cell) -> bool {
        self.cells[self.index(cell)]
    }

    pub fn is_free_cell(&self, cell: Cell) -> bool {
        !self.is_occupied(cell)
    }

    pub fn set_occupied(&mut self, cell: Cell, occupied: bool) {
        let i = self.index(cell);
        self.cells[i] = occupied;
    }

    /// Marks every cell whose centre lies inside the axis-aligned rectangle.
    pub fn fill_rect(&mut self, min: WorldPoint, max: WorldPoint, occupied: bool) {
        for row in 0..self.rows {
            for col in 0..self.cols {
                let c = self.cell_center(Cell::new(row, col));
                if c.x >= min.x && c.x <= max.x && c.y >= min.y && c.y <= max.y {
                    self.set_occupied(Cell::new(row, col), occupied);
                }
            }
        }
    }

    /// The cell containing `p`, or `None` outside the half-open domain.
    pub fn cell_of(&self, p: WorldPoint) -> Option<Cell> {
        let fx = (p.x - self.origin.x) / self.cell_size;
        let fy = (p.y - self.origin.y) / self.cell_size;
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let (col, row) = (fx.floor() as usize, fy.floor() as usize);
        (col < self.cols && row < self.rows).then_some(Cell::new(row, col))
    }

    pub fn cell_center(&self, cell: Cell) -> WorldPoint {
        WorldPoint::new(
            self.origin.x + (cell.col as f64 + 0.5) * self.cell_size,
            self.origin.y + (cell.row as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn contains(&self, p: WorldPoint) -> bool {
        self.cell_of(p).is_some()
    }

    /// False for out-of-domain points and points inside occupied cells.
    pub fn is_free(&self, p: WorldPoint) -> bool {
        self.cell_of(p).is_some_and(|c| self.is_free_cell(c))
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &occ)| !occ)
            .map(|(i, _)| self.cell_at(i))
    }

    pub fn free_count(&self) -> usize {
        self.cells.iter().filter(|&&occ| !occ).count()
    }

    pub fn obstacle_count(&self) -> usize {
        self.len() - self.free_count()
    }

    /// Lebesgue measure of free space (m²).
    pub fn free_area(&self) -> f64 {
        self.free_count() as f64 * self.cell_size * self.cell_size
    }

    /// 8-connected neighbours that exist on the grid, with their step length in cells.
    pub fn neighbours(&self, cell: Cell) -> impl Iterator<Item = (Cell, isize, isize)> + '_ {
        const OFFSETS: [(isize, isize); 8] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        OFFSETS.iter().filter_map(move |&(dr, dc)| {
            let r = cell.row as isize + dr;
            let c = cell.col as isize + dc;
            (r >= 0 && c >= 0 && (r as usize) < self.rows && (c as usize) < self.cols)
                .then(|| (Cell::new(r as usize, c as usize), dr, dc))
        })
    }

    /// True iff the closed segment `[a, b]` stays in the domain and touches no
    /// occupied cell. Corner contact with an occupied cell counts as collision.
    pub fn segment_free(&self, a: WorldPoint, b: WorldPoint) -> bool {
        if !self.is_free(a) || !self.is_free(b) {
            return false;
        }
        if a == b {
            return true;
        }
        // Sweep column strips left to right; inside each strip the segment's
        // y-extent determines the rows whose closed squares it meets.
        let (p, q) = if a.x <= b.x { (a, b) } else { (b, a) };
        let cs = self.cell_size;
        let lx = |x: f64| (x - self.origin.x) / cs;
        let ly = |y: f64| (y - self.origin.y) / cs;
        let (x0, x1) = (lx(p.x), lx(q.x));
        let (y0, y1) = (ly(p.y), ly(q.y));
        let col_lo = closed_lo(x0);
        let col_hi = closed_hi(x1, self.cols);
        let slope = if x1 > x0 { (y1 - y0) / (x1 - x0) } else { 0.0 };
        for col in col_lo..=col_hi {
            let (ys, ye) = if x1 > x0 {
                let xa = (col as f64).max(x0);
                let xb = ((col + 1) as f64).min(x1);
                if xa > xb {
                    continue;
                }
                // Endpoints use their exact coordinates so corner contact
                // at a segment end is not lost to rounding.
                let ya = if xa == x0 { y0 } else { y0 + (xa - x0) * slope };
                let yb = if xb == x1 { y1 } else { y0 + (xb - x0) * slope };
                (ya, yb)
            } else {
                (y0, y1)
            };
            let (ymin, ymax) = if ys <= ye { (ys, ye) } else { (ye, ys) };
            let row_lo = closed_lo(ymin);
            let row_hi = closed_hi(ymax, self.rows);
            for row in row_lo..=row_hi {
                if self.cells[row * self.cols + col] {
                    return false;
                }
            }
        }
        true
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: source_name.to_string(),
            line,
            msg,
        };
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| perr(1, "missing header".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(perr(
                1,
                format!(
                    "header needs 5 fields (rows cols cell_size origin_x origin_y), got {}",
                    fields.len()
                ),
            ));
        }
        let rows: usize = fields[0]
            .parse()
            .map_err(|_| perr(1, format!("bad row count {:?}", fields[0])))?;
        let cols: usize = fields[1]
            .parse()
            .map_err(|_| perr(1, format!("bad column count {:?}", fields[1])))?;
        let mut nums = [0.0f64; 3];
        for (slot, tok) in nums.iter_mut().zip(&fields[2..]) {
            *slot = tok
                .parse()
                .map_err(|_| perr(1, format!("bad number {tok:?}")))?;
        }
        let [cell_size, ox, oy] = nums;
        if rows == 0 || cols == 0 || !(cell_size > 0.0) || !ox.is_finite() || !oy.is_finite() {
            return Err(perr(1, "header values out of range".into()));
        }
        let mut cells = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let line_no = r + 2;
            let line = lines
                .next()
                .ok_or_else(|| perr(line_no, format!("expected {rows} grid rows, found {r}")))?;
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.chars().count() != cols {
                return Err(perr(
                    line_no,
                    format!("expected {cols} cells, found {}", line.chars().count()),
                ));
            }
            for ch in line.chars() {
                match ch {
                    '0' => cells.push(false),
                    '1' => cells.push(true),
                    other => return Err(perr(line_no, format!("invalid cell symbol {other:?}"))),
                }
            }
        }
        if let Some((extra, _)) = lines.enumerate().find(|(_, l)| !l.trim().is_empty()) {
            return Err(perr(
                rows + 2 + extra,
                "unexpected content after grid rows".into(),
            ));
        }
        Self::from_cells(rows, cols, cell_size, WorldPoint::new(ox, oy), cells)
    }

    /// Canonical text encoding; `parse(to_text())` is the identity.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.rows * (self.cols + 1) + 64);
        let _ = writeln!(
            s,
            "{} {} {} {} {}",
            self.rows, self.cols, self.cell_size, self.origin.x, self.origin.y
        );
        for r in 0..self.rows {
            for c in 0..self.cols {
                s.push(if self.cells[r * self.cols + c] {
                    '1'
                } else {
                    '0'
                });
            }
            s.push('\n');
        }
        s
    }
}

// Lowest strip index whose closed interval [i, i+1] contains `v` or lies above it.
fn closed_lo(v: f64) -> usize {
    let i = (v.ceil() - 1.0).max(0.0);
    i as usize
}

fn closed_hi(v: f64, n: usize) -> usize {
    (v.floor().max(0.0) as usize).min(n - 1)
}

pub fn load_map(path: impl AsRef<Path>) -> Result<OccupancyGrid> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    OccupancyGrid::parse(&text, &path.display().to_string())
}

pub fn save_map(grid: &OccupancyGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, grid.to_text()).map_err(|e| Error::io(path, e))
}
