//! Isotropic plume dispersion model, synthetic ground truth fields and the
//! threshold sensor.
//!
//! The expected concentration of a continuous point release at distance
//! `rho` from the source, with signed downwind offset `dw`, is
//!
//! ```text
//! C = Q / (4 pi d rho) * exp(-rho / lambda + u * dw / (2 d))
//! lambda = sqrt(d tau / (1 + u^2 tau / (4 d)))
//! ```
//!
//! Since `1/lambda >= u/(2d)` the exponent is never positive.
//!
//! Wind direction `phi` follows the meteorological convention: the bearing
//! the wind blows *from*, clockwise from north (+y). `phi = 270` is a westerly
//! wind blowing towards +x.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{OccupancyGrid, WorldPoint};
use crate::windfield::{dijkstra_cost, inlet_states, CostField};

/// Release hypothesis: location, rate and the transport parameters.
///
/// `q` is stored in g/s. Priors and scenario files quote release rates in
/// kg/s and convert at the boundary (see [`G_PER_KG`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceTerm {
    pub x: f64,
    pub y: f64,
    /// Release height. Carried for completeness; the model is evaluated in 2D.
    pub z: f64,
    /// Release rate, g/s.
    pub q: f64,
    /// Wind speed, m/s.
    pub u: f64,
    /// Wind direction, degrees in [0, 360).
    pub phi: f64,
    /// Diffusivity, m²/s.
    pub d: f64,
    /// Particle lifetime, s.
    pub tau: f64,
}

pub const G_PER_KG: f64 = 1000.0;

impl SourceTerm {
    pub fn new(x: f64, y: f64, z: f64, q: f64, u: f64, phi: f64, d: f64, tau: f64) -> Result<Self> {
        let s = Self {
            x,
            y,
            z,
            q,
            u,
            phi: normalize_degrees(phi),
            d,
            tau,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.x, self.y, self.z, self.q, self.u, self.phi, self.d, self.tau,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Domain(format!("non-finite source term {self:?}")));
        }
        if !(self.q > 0.0 && self.u >= 0.0 && self.d > 0.0 && self.tau > 0.0) {
            return Err(Error::Domain(format!(
                "source term needs q > 0, u >= 0, d > 0, tau > 0: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn location(&self) -> WorldPoint {
        WorldPoint::new(self.x, self.y)
    }
}

pub fn normalize_degrees(phi: f64) -> f64 {
    let r = phi.rem_euclid(360.0);
    // rem_euclid can return exactly 360.0 for tiny negative inputs.
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Unit vector the wind blows towards for a "from" bearing `phi` (degrees).
pub fn wind_unit(phi: f64) -> (f64, f64) {
    let r = phi.to_radians();
    (-r.sin(), -r.cos())
}

/// Plume length scale `lambda`.
pub fn plume_lambda(d: f64, tau: f64, u: f64) -> Result<f64> {
    if !(d > 0.0) || !(tau > 0.0) {
        return Err(Error::Domain(format!(
            "lambda needs d > 0 and tau > 0 (d={d}, tau={tau})"
        )));
    }
    if !(u >= 0.0) {
        return Err(Error::Domain(format!(
            "wind speed must be non-negative, got {u}"
        )));
    }
    Ok((d * tau / (1.0 + u * u * tau / (4.0 * d))).sqrt())
}

/// Per-hypothesis constants of the plume model, hoisted out of hot loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlumeCoeffs {
    sx: f64,
    sy: f64,
    wx: f64,
    wy: f64,
    inv_lambda: f64,
    advection: f64,
    /// Q / (4 pi d)
    scale: f64,
    ln_scale: f64,
}

impl PlumeCoeffs {
    /// Assumes a validated source term.
    pub fn new(theta: &SourceTerm) -> Self {
        let lambda =
            (theta.d * theta.tau / (1.0 + theta.u * theta.u * theta.tau / (4.0 * theta.d))).sqrt();
        let (wx, wy) = wind_unit(theta.phi);
        let scale = theta.q / (4.0 * PI * theta.d);
        Self {
            sx: theta.x,
            sy: theta.y,
            wx,
            wy,
            inv_lambda: 1.0 / lambda,
            advection: theta.u / (2.0 * theta.d),
            scale,
            ln_scale: scale.ln(),
        }
    }

    /// Clamped distance and the (non-positive) exponent for a given distance
    /// and downwind offset.
    #[inline]
    fn exponent(&self, rho: f64, downwind: f64, rho_min: f64) -> (f64, f64) {
        let rho_c = rho.max(rho_min);
        // Never positive in exact arithmetic; guard against rounding.
        let e = (-rho_c * self.inv_lambda + self.advection * downwind).min(0.0);
        (rho_c, e)
    }

    #[inline]
    fn geometry(&self, p: WorldPoint) -> (f64, f64) {
        let dx = p.x - self.sx;
        let dy = p.y - self.sy;
        ((dx * dx + dy * dy).sqrt(), dx * self.wx + dy * self.wy)
    }

    #[inline]
    pub fn concentration(&self, p: WorldPoint, rho_min: f64) -> f64 {
        let (rho, dw) = self.geometry(p);
        self.concentration_with(rho, dw, rho_min)
    }

    #[inline]
    pub fn concentration_with(&self, rho: f64, downwind: f64, rho_min: f64) -> f64 {
        let (rho_c, e) = self.exponent(rho, downwind, rho_min);
        self.scale / rho_c * e.exp()
    }

    /// Natural log of [`concentration`](Self::concentration); avoids underflow far from the source.
    #[inline]
    pub fn ln_concentration(&self, p: WorldPoint, rho_min: f64) -> f64 {
        let (rho, dw) = self.geometry(p);
        let (rho_c, e) = self.exponent(rho, dw, rho_min);
        self.ln_scale - rho_c.ln() + e
    }
}

/// Expected concentration (g/m³) at `p` for release `theta`.
pub fn expected_concentration(p: WorldPoint, theta: &SourceTerm, rho_min: f64) -> f64 {
    PlumeCoeffs::new(theta).concentration(p, rho_min)
}

/// A sensor reading; non-detections carry value 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub value: f64,
    pub detected: bool,
    pub position: WorldPoint,
    pub step_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlumeMode {
    Analytic,
    Geodesic,
    Replay,
}

/// Time-indexed concentration frames on the map lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySequence {
    rows: usize,
    cols: usize,
    /// (timestamp s, row-major values g/m³), sorted by time.
    frames: Vec<(f64, Vec<f64>)>,
}

impl ReplaySequence {
    pub fn new(rows: usize, cols: usize, mut frames: Vec<(f64, Vec<f64>)>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Config("replay mode needs at least one frame".into()));
        }
        for (t, f) in &frames {
            if f.len() != rows * cols {
                return Err(Error::Config(format!(
                    "replay frame at t={t} has {} values, grid has {}",
                    f.len(),
                    rows * cols
                )));
            }
            if f.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config(format!(
                    "replay frame at t={t} has negative or non-finite values"
                )));
            }
        }
        frames.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { rows, cols, frames })
    }

    /// Reads an index file of `timestamp,relative_path` lines (`#` starts a comment).
    pub fn load(index: impl AsRef<Path>, grid: &OccupancyGrid) -> Result<Self> {
        let index = index.as_ref();
        let text = std::fs::read_to_string(index).map_err(|e| Error::io(index, e))?;
        let base = index.parent().unwrap_or_else(|| Path::new("."));
        let mut frames = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse {
                path: index.display().to_string(),
                line: n + 1,
                msg,
            };
            let (t, rel) = line
                .split_once(',')
                .ok_or_else(|| perr("expected `timestamp,path`".into()))?;
            let t: f64 = t
                .trim()
                .parse()
                .map_err(|_| perr(format!("bad timestamp {t:?}")))?;
            let frame = read_frame_csv(&base.join(rel.trim()), grid.rows(), grid.cols())?;
            frames.push((t, frame));
        }
        Self::new(grid.rows(), grid.cols(), frames)
    }

    fn frame_at(&self, time: f64) -> &[f64] {
        let i = self.frames.partition_point(|(t, _)| *t <= time);
        &self.frames[i.saturating_sub(1)].1
    }

    /// Bilinear interpolation between cell centres, clamped at the border.
    pub fn sample(&self, grid: &OccupancyGrid, p: WorldPoint, time: f64) -> f64 {
        let f = self.frame_at(time);
        let o = grid.origin();
        let cs = grid.cell_size();
        let fx = ((p.x - o.x) / cs - 0.5).clamp(0.0, (self.cols - 1) as f64);
        let fy = ((p.y - o.y) / cs - 0.5).clamp(0.0, (self.rows - 1) as f64);
        let (c0, r0) = (fx.floor() as usize, fy.floor() as usize);
        let (c1, r1) = ((c0 + 1).min(self.cols - 1), (r0 + 1).min(self.rows - 1));
        let (tx, ty) = (fx - c0 as f64, fy - r0 as f64);
        let at = |r: usize, c: usize| f[r * self.cols + c];
        let top = at(r0, c0) * (1.0 - tx) + at(r0, c1) * tx;
        let bottom = at(r1, c0) * (1.0 - tx) + at(r1, c1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

fn read_frame_csv(path: &Path, rows: usize, cols: usize) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut values = Vec::with_capacity(rows * cols);
    for (n, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if rec.len() != cols {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: n + 1,
                msg: format!("expected {cols} values, found {}", rec.len()),
            });
        }
        for field in rec.iter() {
            values.push(field.parse::<f64>().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: n + 1,
                msg: format!("bad value {field:?}"),
            })?);
        }
    }
    if values.len() != rows * cols {
        return Err(Error::Config(format!(
            "{}: expected {rows} rows of {cols}",
            path.display()
        )));
    }
    Ok(values)
}

/// The concentration field the simulated robot actually observes.
///
/// * `Analytic` evaluates the plume model directly.
/// * `Geodesic` replaces the straight-line distance with the obstacle-aware
///   path distance from the source, so the plume wraps around buildings and
///   is attenuated in their shadow. The downwind offset is that same path
///   distance, signed positive where the cell lies at least as far from the
///   upwind inlet as the source does.
/// * `Replay` interpolates externally supplied frames.
///
/// All modes apply multiplicative log-normal noise `exp(sigma * N(0,1))`
/// and report zero inside obstacles.
#[derive(Debug, Clone)]
pub struct GroundTruthField {
    mode: PlumeMode,
    source: SourceTerm,
    noise_sigma: f64,
    rho_min: f64,
    coeffs: PlumeCoeffs,
    geodesic: Option<CostField>,
    inlet: Option<(CostField, f64)>,
    replay: Option<ReplaySequence>,
}

impl GroundTruthField {
    pub fn analytic(source: SourceTerm, noise_sigma: f64, rho_min: f64) -> Result<Self> {
        Self::build(
            PlumeMode::Analytic,
            source,
            noise_sigma,
            rho_min,
            None,
            None,
        )
    }

    pub fn geodesic(source: SourceTerm, noise_sigma: f64, grid: &OccupancyGrid) -> Result<Self> {
        let cell = grid
            .cell_of(source.location())
            .filter(|&c| grid.is_free_cell(c))
            .ok_or_else(|| {
                Error::Config("geodesic plume needs the source in a free cell".into())
            })?;
        let field = dijkstra_cost(grid, &[cell], true);
        let inlet = dijkstra_cost(grid, &inlet_states(grid, source.phi), true);
        let src_cost = inlet.get(cell);
        let mut f = Self::build(
            PlumeMode::Geodesic,
            source,
            noise_sigma,
            grid.cell_size() / 2.0,
            Some(field),
            None,
        )?;
        f.inlet = Some((inlet, src_cost));
        Ok(f)
    }

    pub fn replay(
        source: SourceTerm,
        noise_sigma: f64,
        rho_min: f64,
        frames: Option<ReplaySequence>,
    ) -> Result<Self> {
        let frames =
            frames.ok_or_else(|| Error::Config("replay mode configured without frames".into()))?;
        Self::build(
            PlumeMode::Replay,
            source,
            noise_sigma,
            rho_min,
            None,
            Some(frames),
        )
    }

    fn build(
        mode: PlumeMode,
        source: SourceTerm,
        noise_sigma: f64,
        rho_min: f64,
        geodesic: Option<CostField>,
        replay: Option<ReplaySequence>,
    ) -> Result<Self> {
        source.validate()?;
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise sigma must be >= 0, got {noise_sigma}"
            )));
        }
        if !(rho_min > 0.0) {
            return Err(Error::Config(format!(
                "rho_min must be positive, got {rho_min}"
            )));
        }
        Ok(Self {
            mode,
            source,
            noise_sigma,
            rho_min,
            coeffs: PlumeCoeffs::new(&source),
            geodesic,
            inlet: None,
            replay,
        })
    }

    pub fn mode(&self) -> PlumeMode {
        self.mode
    }

    pub fn source(&self) -> &SourceTerm {
        &self.source
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    /// Noise-free field value.
    pub fn mean_concentration(&self, grid: &OccupancyGrid, p: WorldPoint, time: f64) -> f64 {
        let Some(cell) = grid.cell_of(p) else {
            return 0.0;
        };
        if grid.is_occupied(cell) {
            return 0.0;
        }
        match self.mode {
            PlumeMode::Analytic => self.coeffs.concentration(p, self.rho_min),
            PlumeMode::Geodesic => {
                let geo = self
                    .geodesic
                    .as_ref()
                    .map_or(f64::INFINITY, |f| f.get(cell));
                if !geo.is_finite() {
                    return 0.0;
                }
                let Some((inlet, c0)) = self.inlet.as_ref() else {
                    return 0.0;
                };
                let downwind = if inlet.get(cell) >= *c0 { geo } else { -geo };
                self.coeffs.concentration_with(geo, downwind, self.rho_min)
            }
            PlumeMode::Replay => self
                .replay
                .as_ref()
                .map_or(0.0, |r| r.sample(grid, p, time)),
        }
    }

    pub fn true_concentration<R: Rng + ?Sized>(
        &self,
        grid: &OccupancyGrid,
        p: WorldPoint,
        time: f64,
        rng: &mut R,
    ) -> f64 {
        let mean = self.mean_concentration(grid, p, time);
        if self.noise_sigma > 0.0 {
            let eps: f64 = rng.sample(StandardNormal);
            mean * (self.noise_sigma * eps).exp()
        } else {
            mean
        }
    }
}

/// Takes one thresholded reading at `p`. Readings at or above `threshold`
/// are detections; anything below is reported as a zero non-detection.
pub fn sample_measurement<R: Rng + ?Sized>(
    field: &GroundTruthField,
    grid: &OccupancyGrid,
    p: WorldPoint,
    threshold: f64,
    time: f64,
    step_index: usize,
    rng: &mut R,
) -> Result<Measurement> {
    if !grid.is_free(p) {
        return Err(Error::Caller(format!(
            "cannot sample inside an obstacle at {p:?}"
        )));
    }
    let value = field.true_concentration(grid, p, time, rng);
    let detected = value >= threshold;
    Ok(Measurement {
        value: if detected { value } else { 0.0 },
        detected,
        position: p,
        step_index,
    })
}
