//! Procedural desk-scale maps and the reference release/start layouts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{OccupancyGrid, WorldPoint};

use super::config::SourceConfig;

/// 240 x 160 cells at 5 m: a 1200 m x 800 m domain.
pub const MAP_ROWS: usize = 160;
pub const MAP_COLS: usize = 240;
pub const MAP_CELL: f64 = 5.0;

const LAYOUT_SEED: u64 = 0x0b10c5;
const LOT: f64 = 100.0;
const CITY_X: (f64, f64) = (150.0, 1050.0);
/// Share of lots left without a building.
const EMPTY_LOTS: f64 = 0.15;
/// Share of buildings kept on the sparse map.
const SPARSE_KEEP: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinMap {
    /// No obstacles.
    Open,
    /// Blocks on a 100 m lattice between x = 150 and 1050, an open east-west
    /// street through y = 355..395 and a narrow north-south canyon at
    /// x = 525..545, y = 240..350.
    Urban,
    /// Same street layout with most blocks removed.
    UrbanSparse,
}

pub fn builtin_map(kind: BuiltinMap) -> OccupancyGrid {
    let mut g = OccupancyGrid::new(MAP_ROWS, MAP_COLS, MAP_CELL, WorldPoint::default())
        .expect("static dimensions");
    if kind == BuiltinMap::Open {
        return g;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(LAYOUT_SEED);
    let lots_x = ((CITY_X.1 - CITY_X.0) / LOT) as usize;
    let lots_y = (g.height() / LOT) as usize;
    for j in 0..lots_y {
        for i in 0..lots_x {
            // Draw everything for every lot so both variants share geometry.
            let empty = rng.random::<f64>() < EMPTY_LOTS;
            let keep_sparse = rng.random::<f64>() < SPARSE_KEEP;
            let w = rng.random_range(45.0..75.0);
            let h = rng.random_range(40.0..75.0);
            let ox = rng.random_range(10.0..(LOT - 10.0 - w));
            let oy = rng.random_range(10.0..(LOT - 10.0 - h));
            if empty || (kind == BuiltinMap::UrbanSparse && !keep_sparse) {
                continue;
            }
            let x0 = CITY_X.0 + i as f64 * LOT + ox;
            let y0 = j as f64 * LOT + oy;
            g.fill_rect(
                WorldPoint::new(x0, y0),
                WorldPoint::new(x0 + w, y0 + h),
                true,
            );
        }
    }
    // Main street.
    g.fill_rect(
        WorldPoint::new(0.0, 355.0),
        WorldPoint::new(g.width(), 395.0),
        false,
    );
    // Canyon: two blocks either side of a 20 m gap.
    g.fill_rect(
        WorldPoint::new(460.0, 215.0),
        WorldPoint::new(630.0, 350.0),
        false,
    );
    g.fill_rect(
        WorldPoint::new(480.0, 240.0),
        WorldPoint::new(525.0, 350.0),
        true,
    );
    g.fill_rect(
        WorldPoint::new(545.0, 240.0),
        WorldPoint::new(610.0, 350.0),
        true,
    );
    for s in reference_sources().iter().take(2) {
        clear_disk(&mut g, s.config.location(), 25.0);
    }
    for p in reference_starts() {
        clear_disk(&mut g, p, 25.0);
    }
    g
}

fn clear_disk(g: &mut OccupancyGrid, c: WorldPoint, r: f64) {
    for row in 0..g.rows() {
        for col in 0..g.cols() {
            let cell = crate::grid::Cell::new(row, col);
            if g.cell_center(cell).distance(&c) <= r {
                g.set_occupied(cell, false);
            }
        }
    }
}

/// A reference release and the map it is usually paired with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSource {
    pub name: &'static str,
    pub config: SourceConfig,
    pub map: BuiltinMap,
}

/// The three releases. Source 1 is elevated, so it is paired with the
/// sparse map; source 3 sits in the canyon.
pub fn reference_sources() -> [ReferenceSource; 3] {
    let base = SourceConfig::default();
    [
        ReferenceSource {
            name: "s1",
            config: SourceConfig {
                x: 466.0,
                y: 392.0,
                z: 13.6,
                q_kg_s: 1.11,
                ..base
            },
            map: BuiltinMap::UrbanSparse,
        },
        ReferenceSource {
            name: "s2",
            config: SourceConfig {
                x: 475.0,
                y: 376.0,
                z: 1.0,
                q_kg_s: 1.14,
                ..base
            },
            map: BuiltinMap::Urban,
        },
        ReferenceSource {
            name: "s3",
            config: SourceConfig {
                x: 534.0,
                y: 300.0,
                z: 1.0,
                q_kg_s: 1.0,
                ..base
            },
            map: BuiltinMap::Urban,
        },
    ]
}

/// Start positions: three on the east side, two on the west side.
pub fn reference_starts() -> [WorldPoint; 5] {
    [
        WorldPoint::new(1100.0, 50.0),
        WorldPoint::new(1100.0, 325.0),
        WorldPoint::new(1100.0, 650.0),
        WorldPoint::new(100.0, 50.0),
        WorldPoint::new(100.0, 650.0),
    ]
}
