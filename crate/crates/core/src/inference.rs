//! Particle filter over release hypotheses.

use std::f64::consts::{PI, SQRT_2};
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::grid::WorldPoint;
use crate::plume::{normalize_degrees, Measurement, PlumeCoeffs, SourceTerm, G_PER_KG};

/// One-dimensional prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Dist {
    Normal { mean: f64, std: f64 },
    Gamma { shape: f64, scale: f64 },
}

impl Dist {
    fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            Dist::Normal { mean, std } => mean.is_finite() && std > 0.0 && std.is_finite(),
            Dist::Gamma { shape, scale } => {
                shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "prior for {name} needs positive, finite scale parameters: {self:?}"
            )))
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Dist::Normal { mean, std } => Normal::new(mean, std).expect("validated").sample(rng),
            Dist::Gamma { shape, scale } => {
                Gamma::new(shape, scale).expect("validated").sample(rng)
            }
        }
    }

    /// Standard deviation of the distribution.
    pub fn scale(&self) -> f64 {
        match *self {
            Dist::Normal { std, .. } => std,
            Dist::Gamma { shape, scale } => shape.sqrt() * scale,
        }
    }
}

/// Independent priors for the eight sampled parameters. The release rate
/// prior is expressed in kg/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSpec {
    pub x: Dist,
    pub y: Dist,
    pub z: Dist,
    pub q: Dist,
    pub u: Dist,
    pub phi: Dist,
    pub d: Dist,
    pub tau: Dist,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            x: Dist::Normal {
                mean: 600.0,
                std: 100.0,
            },
            y: Dist::Normal {
                mean: 400.0,
                std: 100.0,
            },
            z: Dist::Normal {
                mean: 1.0,
                std: 0.5,
            },
            q: Dist::Gamma {
                shape: 2.0,
                scale: 1.0,
            },
            u: Dist::Normal {
                mean: 2.5,
                std: 2.0,
            },
            phi: Dist::Normal {
                mean: 270.0,
                std: 10.0,
            },
            d: Dist::Normal {
                mean: 1.0,
                std: 2.0,
            },
            tau: Dist::Normal {
                mean: 8.0,
                std: 2.0,
            },
        }
    }
}

const MAX_REDRAWS: usize = 100_000;

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, d) in self.named() {
            d.validate(name)?;
        }
        Ok(())
    }

    fn named(&self) -> [(&'static str, &Dist); 8] {
        [
            ("x", &self.x),
            ("y", &self.y),
            ("z", &self.z),
            ("q", &self.q),
            ("u", &self.u),
            ("phi", &self.phi),
            ("d", &self.d),
            ("tau", &self.tau),
        ]
    }

    /// Draws one admissible hypothesis, redrawing each constrained parameter
    /// until it is valid.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SourceTerm> {
        let positive = |d: &Dist, name: &str, rng: &mut R, allow_zero: bool| -> Result<f64> {
            for _ in 0..MAX_REDRAWS {
                let v = d.sample(rng);
                if v > 0.0 || (allow_zero && v == 0.0) {
                    return Ok(v);
                }
            }
            Err(Error::Config(format!(
                "prior for {name} almost never yields admissible values"
            )))
        };
        let x = self.x.sample(rng);
        let y = self.y.sample(rng);
        let z = self.z.sample(rng);
        let q = positive(&self.q, "q", rng, false)? * G_PER_KG;
        let u = positive(&self.u, "u", rng, true)?;
        let phi = normalize_degrees(self.phi.sample(rng));
        let d = positive(&self.d, "d", rng, false)?;
        let tau = positive(&self.tau, "tau", rng, false)?;
        Ok(SourceTerm {
            x,
            y,
            z,
            q,
            u,
            phi,
            d,
            tau,
        })
    }

    /// Per-parameter jitter standard deviations at `fraction` of the prior scale,
    /// in [`SourceTerm`] units.
    pub fn jitter_scales(&self, fraction: f64) -> [f64; 8] {
        [
            fraction * self.x.scale(),
            fraction * self.y.scale(),
            fraction * self.z.scale(),
            fraction * self.q.scale() * G_PER_KG,
            fraction * self.u.scale(),
            fraction * self.phi.scale(),
            fraction * self.d.scale(),
            fraction * self.tau.scale(),
        ]
    }
}

/// Sensor output as seen by the estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reading {
    pub value: f64,
    pub detected: bool,
}

impl From<&Measurement> for Reading {
    fn from(m: &Measurement) -> Self {
        Self {
            value: m.value,
            detected: m.detected,
        }
    }
}

/// Measurement model shared by the estimator and the planning utility.
///
/// `predict` condenses each particle into one scalar at the sensing location;
/// likelihoods and simulated readings are then functions of that scalar only.
pub trait SensorModel: Sync {
    fn predict(&self, ps: &ParticleSet, pos: WorldPoint, out: &mut Vec<f64>);

    fn log_likelihood(&self, reading: &Reading, predicted: f64) -> f64;

    /// `log_likelihood` for every entry of `predicted`.
    fn log_likelihoods(&self, reading: &Reading, predicted: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(predicted.iter().map(|&p| self.log_likelihood(reading, p)));
    }

    fn likelihood(&self, reading: &Reading, predicted: f64) -> f64 {
        self.log_likelihood(reading, predicted).exp()
    }

    /// Simulated reading for a particle summary and a standard normal draw.
    fn sample(&self, predicted: f64, eps: f64) -> Reading;

    /// Reading with no sensor noise.
    fn sample_noiseless(&self, predicted: f64) -> Reading {
        self.sample(predicted, 0.0)
    }
}

/// Log-normal concentration sensor with censoring below a detection threshold.
///
/// Detections are scored by the normal density of `ln z` around `ln C`
/// (the `1/z` Jacobian is common to all particles and dropped); a
/// non-detection has probability `Phi((ln T - ln C) / sigma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormalSensor {
    pub sigma: f64,
    pub threshold: f64,
    pub rho_min: f64,
}

impl LogNormalSensor {
    pub fn new(sigma: f64, threshold: f64, rho_min: f64) -> Result<Self> {
        if !(sigma > 0.0 && threshold > 0.0 && rho_min > 0.0) {
            return Err(Error::Config(format!(
                "sensor model needs sigma, threshold and rho_min > 0 (got {sigma}, {threshold}, {rho_min})"
            )));
        }
        Ok(Self {
            sigma,
            threshold,
            rho_min,
        })
    }
}

/// ln Phi(x) without underflow in the lower tail.
pub fn ln_normal_cdf(x: f64) -> f64 {
    if x > 8.0 {
        // ln(1 - Phi(-x)) ~ -phi(x) / x; the correction is below 1e-16 here.
        -(-0.5 * x * x).exp() / (x * (2.0 * PI).sqrt())
    } else if x < -30.0 {
        // Mills-ratio asymptotic; relative error below 1e-3 here.
        -0.5 * x * x - (-x).ln() - 0.5 * (2.0 * PI).ln()
    } else {
        (0.5 * erfc(-x / SQRT_2)).ln()
    }
}

impl SensorModel for LogNormalSensor {
    /// Log expected concentration per particle.
    fn predict(&self, ps: &ParticleSet, pos: WorldPoint, out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            ps.coeffs
                .iter()
                .map(|c| c.ln_concentration(pos, self.rho_min)),
        );
    }

    fn log_likelihood(&self, reading: &Reading, ln_c: f64) -> f64 {
        if reading.detected {
            if ln_c == f64::NEG_INFINITY || !(reading.value > 0.0) {
                return f64::NEG_INFINITY;
            }
            let r = (reading.value.ln() - ln_c) / self.sigma;
            -0.5 * r * r - (self.sigma * (2.0 * PI).sqrt()).ln()
        } else {
            if ln_c == f64::NEG_INFINITY {
                return 0.0;
            }
            ln_normal_cdf((self.threshold.ln() - ln_c) / self.sigma)
        }
    }

    fn log_likelihoods(&self, reading: &Reading, ln_c: &[f64], out: &mut Vec<f64>) {
        out.clear();
        if reading.detected {
            if !(reading.value > 0.0) {
                out.resize(ln_c.len(), f64::NEG_INFINITY);
                return;
            }
            let ln_z = reading.value.ln();
            let norm = (self.sigma * (2.0 * PI).sqrt()).ln();
            let inv = 1.0 / self.sigma;
            out.extend(ln_c.iter().map(|&c| {
                if c == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    let r = (ln_z - c) * inv;
                    -0.5 * r * r - norm
                }
            }));
        } else {
            let ln_t = self.threshold.ln();
            out.extend(ln_c.iter().map(|&c| {
                if c == f64::NEG_INFINITY {
                    0.0
                } else {
                    ln_normal_cdf((ln_t - c) / self.sigma)
                }
            }));
        }
    }

    fn sample(&self, ln_c: f64, eps: f64) -> Reading {
        let value = (ln_c + self.sigma * eps).exp();
        if value >= self.threshold {
            Reading {
                value,
                detected: true,
            }
        } else {
            Reading {
                value: 0.0,
                detected: false,
            }
        }
    }
}

/// Multiplies `weights` by `exp(log_lik)` and renormalises in index order.
/// Returns false (weights untouched) when every product is zero.
pub fn reweight(weights: &mut [f64], log_lik: &[f64]) -> bool {
    let mut top = f64::NEG_INFINITY;
    for (w, l) in weights.iter().zip(log_lik) {
        if *w > 0.0 {
            top = top.max(w.ln() + l);
        }
    }
    if !top.is_finite() {
        return false;
    }
    let mut total = 0.0;
    let mut scratch: Vec<f64> = Vec::with_capacity(weights.len());
    for (w, l) in weights.iter().zip(log_lik) {
        let v = if *w > 0.0 {
            (w.ln() + l - top).exp()
        } else {
            0.0
        };
        total += v;
        scratch.push(v);
    }
    for (w, v) in weights.iter_mut().zip(scratch) {
        *w = v / total;
    }
    true
}

/// Outcome of a single filter step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateInfo {
    pub ess: f64,
    pub resampled: bool,
    /// Every particle had zero likelihood; weights were left as they were.
    pub degenerate: bool,
}

/// Weighted particle approximation of the posterior over release hypotheses.
#[derive(Debug, Clone)]
pub struct ParticleSet {
    particles: Vec<SourceTerm>,
    coeffs: Vec<PlumeCoeffs>,
    weights: Vec<f64>,
    eta: f64,
    jitter: [f64; 8],
}

impl ParticleSet {
    /// Builds a set from explicit hypotheses. Weights are normalised.
    pub fn from_particles(
        particles: Vec<SourceTerm>,
        weights: Vec<f64>,
        eta: f64,
        jitter: [f64; 8],
    ) -> Result<Self> {
        if particles.is_empty() || particles.len() != weights.len() {
            return Err(Error::Caller(
                "particle and weight counts must match and be non-zero".into(),
            ));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Caller(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Caller("weights sum to zero".into()));
        }
        for p in &particles {
            p.validate()?;
        }
        Ok(Self {
            coeffs: particles.iter().map(PlumeCoeffs::new).collect(),
            weights: weights.iter().map(|w| w / total).collect(),
            particles,
            eta,
            jitter,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[SourceTerm] {
        &self.particles
    }

    pub fn coeffs(&self) -> &[PlumeCoeffs] {
        &self.coeffs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Shannon entropy of the weights (nats).
    pub fn weight_entropy(&self) -> f64 {
        entropy(&self.weights)
    }

    /// Bayes update with one reading, then systematic resampling if the
    /// effective sample size ratio drops below `eta`.
    pub fn update<M: SensorModel + ?Sized, R: Rng + ?Sized>(
        &mut self,
        z: &Measurement,
        model: &M,
        rng: &mut R,
    ) -> UpdateInfo {
        let mut pred = Vec::with_capacity(self.len());
        model.predict(self, z.position, &mut pred);
        let reading = Reading::from(z);
        let mut log_lik = Vec::with_capacity(pred.len());
        model.log_likelihoods(&reading, &pred, &mut log_lik);
        let degenerate = !reweight(&mut self.weights, &log_lik);
        if degenerate {
            log::warn!(
                "all particles have zero likelihood for reading at ({:.1}, {:.1}); weights unchanged",
                z.position.x,
                z.position.y
            );
        }
        let ess = self.ess();
        let resampled = ess / (self.len() as f64) < self.eta;
        if resampled {
            self.resample(rng);
        }
        UpdateInfo {
            ess: self.ess(),
            resampled,
            degenerate,
        }
    }

    /// Systematic resampling to uniform weights followed by per-parameter jitter.
    pub fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.len();
        let idx = systematic_indices(&self.weights, rng.random::<f64>());
        let mut next = Vec::with_capacity(n);
        for i in idx {
            next.push(jitter(&self.particles[i], &self.jitter, rng));
        }
        self.coeffs = next.iter().map(PlumeCoeffs::new).collect();
        self.particles = next;
        self.weights = vec![1.0 / n as f64; n];
    }

    pub fn posterior_mean_location(&self) -> WorldPoint {
        let (mut x, mut y) = (0.0, 0.0);
        for (p, w) in self.particles.iter().zip(&self.weights) {
            x += w * p.x;
            y += w * p.y;
        }
        WorldPoint::new(x, y)
    }

    pub fn location_std(&self) -> f64 {
        let m = self.posterior_mean_location();
        let mut s = 0.0;
        for (p, w) in self.particles.iter().zip(&self.weights) {
            s += w * ((p.x - m.x).powi(2) + (p.y - m.y).powi(2));
        }
        s.sqrt()
    }

    pub fn weighted_rmse(&self, truth: WorldPoint) -> f64 {
        let mut s = 0.0;
        for (p, w) in self.particles.iter().zip(&self.weights) {
            s += w * ((p.x - truth.x).powi(2) + (p.y - truth.y).powi(2));
        }
        s.sqrt()
    }

    /// Circular weighted mean of the wind direction, degrees in [0, 360).
    pub fn mean_phi(&self) -> f64 {
        let (mut s, mut c) = (0.0, 0.0);
        for (p, w) in self.particles.iter().zip(&self.weights) {
            let r = p.phi.to_radians();
            s += w * r.sin();
            c += w * r.cos();
        }
        normalize_degrees(s.atan2(c).to_degrees())
    }

    /// Weighted mean of every parameter (wind direction averaged on the circle).
    pub fn mean(&self) -> SourceTerm {
        let mut m = SourceTerm {
            x: 0.0,
            y: 0.0,
            z: 0.0,
            q: 0.0,
            u: 0.0,
            phi: 0.0,
            d: 0.0,
            tau: 0.0,
        };
        for (p, w) in self.particles.iter().zip(&self.weights) {
            m.x += w * p.x;
            m.y += w * p.y;
            m.z += w * p.z;
            m.q += w * p.q;
            m.u += w * p.u;
            m.d += w * p.d;
            m.tau += w * p.tau;
        }
        m.phi = self.mean_phi();
        m
    }

    /// One row per particle: `x,y,z,q,u,phi,d,tau,weight`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("x,y,z,q,u,phi,d,tau,weight\n");
        for (p, w) in self.particles.iter().zip(&self.weights) {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                p.x, p.y, p.z, p.q, p.u, p.phi, p.d, p.tau, w
            ));
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

/// Draws `n` prior hypotheses with uniform weights.
pub fn init_prior<R: Rng + ?Sized>(
    spec: &PriorSpec,
    n: usize,
    eta: f64,
    jitter_fraction: f64,
    rng: &mut R,
) -> Result<ParticleSet> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Config("particle count must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Config(format!("eta must lie in [0, 1], got {eta}")));
    }
    if !(jitter_fraction >= 0.0 && jitter_fraction.is_finite()) {
        return Err(Error::Config(format!(
            "jitter scale must be >= 0, got {jitter_fraction}"
        )));
    }
    let particles = (0..n)
        .map(|_| spec.sample(rng))
        .collect::<Result<Vec<_>>>()?;
    ParticleSet::from_particles(
        particles,
        vec![1.0; n],
        eta,
        spec.jitter_scales(jitter_fraction),
    )
}

/// Systematic resampling with offset `u` in [0, 1).
pub fn systematic_indices(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    let step = 1.0 / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut i = 0;
    for k in 0..n {
        let target = (u + k as f64) * step;
        while target >= cum && i + 1 < n {
            i += 1;
            cum += weights[i];
        }
        out.push(i);
    }
    out
}

fn jitter<R: Rng + ?Sized>(p: &SourceTerm, s: &[f64; 8], rng: &mut R) -> SourceTerm {
    let mut e = [0.0; 8];
    for (k, v) in e.iter_mut().enumerate() {
        let n: f64 = rng.sample(StandardNormal);
        *v = s[k] * n;
    }
    let keep_positive = |old: f64, new: f64| if new > 0.0 { new } else { old };
    SourceTerm {
        x: p.x + e[0],
        y: p.y + e[1],
        z: p.z + e[2],
        q: keep_positive(p.q, p.q + e[3]),
        u: if p.u + e[4] >= 0.0 { p.u + e[4] } else { p.u },
        phi: normalize_degrees(p.phi + e[5]),
        d: keep_positive(p.d, p.d + e[6]),
        tau: keep_positive(p.tau, p.tau + e[7]),
    }
}

/// Shannon entropy `-sum w ln w` with `0 ln 0 = 0`.
pub fn entropy(weights: &[f64]) -> f64 {
    -weights
        .iter()
        .filter(|w| **w > 0.0)
        .map(|w| w * w.ln())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn at(x: f64, y: f64) -> SourceTerm {
        SourceTerm::new(x, y, 1.0, 1000.0, 2.0, 270.0, 1.0, 8.0).unwrap()
    }

    fn set(points: &[(f64, f64)], weights: &[f64]) -> ParticleSet {
        let ps = points.iter().map(|&(x, y)| at(x, y)).collect();
        ParticleSet::from_particles(ps, weights.to_vec(), 0.5, [0.0; 8]).unwrap()
    }

    fn sensor() -> LogNormalSensor {
        LogNormalSensor::new(0.3, 0.01, 2.5).unwrap()
    }

    #[test]
    fn prior_mean_and_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20_000;
        let ps = init_prior(&PriorSpec::default(), n, 0.5, 0.01, &mut rng).unwrap();
        let mean_x: f64 = ps.particles().iter().map(|p| p.x).sum::<f64>() / n as f64;
        assert!(
            (mean_x - 600.0).abs() < 3.0 * 100.0 / (n as f64).sqrt(),
            "{mean_x}"
        );
        assert!(ps.weights().iter().all(|&w| w == 1.0 / n as f64));
        assert!(ps
            .particles()
            .iter()
            .all(|p| p.d > 0.0 && p.tau > 0.0 && p.q > 0.0 && p.u >= 0.0));
        assert!(ps.particles().iter().all(|p| (0.0..360.0).contains(&p.phi)));
    }

    #[test]
    fn invalid_prior_rejected() {
        let mut spec = PriorSpec::default();
        spec.d = Dist::Normal {
            mean: 1.0,
            std: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            init_prior(&spec, 10, 0.5, 0.01, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn normal_cdf_tails_join_smoothly() {
        let exact = |x: f64| (0.5 * erfc(-x / SQRT_2)).ln();
        // In the upper tail ln Phi(x) = ln(1 - eps) ~ -eps with eps = erfc(x / sqrt 2) / 2.
        for x in [8.01, 9.0, 12.0, 30.0] {
            let (a, b) = (ln_normal_cdf(x), -0.5 * erfc(x / SQRT_2));
            assert!((a - b).abs() <= 2.0 / (x * x) * b.abs(), "{x}: {a} vs {b}");
        }
        assert!((ln_normal_cdf(8.0) - exact(8.0)).abs() < 1e-15);
        for x in [-5.0, -1.0, 0.0, 1.0, 5.0] {
            assert_eq!(ln_normal_cdf(x), exact(x));
        }
    }

    #[test]
    fn batch_likelihoods_match_scalar() {
        let s = sensor();
        let pred = [f64::NEG_INFINITY, -12.0, -4.6, -1.0, 0.5, 3.0];
        let mut out = Vec::new();
        for r in [
            Reading {
                value: 0.0,
                detected: false,
            },
            Reading {
                value: 0.02,
                detected: true,
            },
            Reading {
                value: 3.0,
                detected: true,
            },
        ] {
            s.log_likelihoods(&r, &pred, &mut out);
            for (&p, &l) in pred.iter().zip(&out) {
                let want = s.log_likelihood(&r, p);
                assert!(
                    l == want || (l - want).abs() < 1e-12,
                    "{r:?} {p}: {l} vs {want}"
                );
            }
        }
    }

    #[test]
    fn distant_source_nondetection_is_near_certain() {
        let s = sensor();
        let ps = set(&[(0.0, 0.0)], &[1.0]);
        let mut pred = Vec::new();
        s.predict(&ps, WorldPoint::new(-5000.0, 3000.0), &mut pred);
        let l = s.likelihood(
            &Reading {
                value: 0.0,
                detected: false,
            },
            pred[0],
        );
        assert!((l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn detection_density_peaks_at_prediction() {
        let s = sensor();
        let ln_c = 0.05f64.ln();
        let at_mean = s.likelihood(
            &Reading {
                value: 0.05,
                detected: true,
            },
            ln_c,
        );
        for k in 1..50 {
            let v = 0.05 * (1.0 + 0.02 * k as f64);
            assert!(
                s.likelihood(
                    &Reading {
                        value: v,
                        detected: true
                    },
                    ln_c
                ) < at_mean
            );
            let v = 0.05 / (1.0 + 0.02 * k as f64);
            assert!(
                s.likelihood(
                    &Reading {
                        value: v,
                        detected: true
                    },
                    ln_c
                ) < at_mean
            );
        }
        // A hypothesis predicting 100x the observed value scores lower.
        let hundred = s.likelihood(
            &Reading {
                value: 0.05,
                detected: true,
            },
            (5.0f64).ln(),
        );
        assert!(at_mean > hundred);
    }

    #[test]
    fn nondetection_probability_matches_normal_cdf() {
        let s = sensor();
        let ln_c = 0.012f64.ln();
        let l = s.likelihood(
            &Reading {
                value: 0.0,
                detected: false,
            },
            ln_c,
        );
        let z = (0.01f64.ln() - ln_c) / 0.3;
        let expected = 0.5 * erfc(-z / SQRT_2);
        assert_relative_eq!(l, expected, max_relative = 1e-12);
        assert!(ln_normal_cdf(-40.0).is_finite());
        assert!((ln_normal_cdf(-29.999) - ln_normal_cdf(-30.001)).abs() < 0.1);
    }

    #[test]
    fn hand_bayes_two_particles() {
        let mut w = vec![0.5, 0.5];
        assert!(reweight(&mut w, &[0.2f64.ln(), 0.8f64.ln()]));
        assert_relative_eq!(w[0], 0.2, max_relative = 1e-12);
        assert_relative_eq!(w[1], 0.8, max_relative = 1e-12);
        let mut w = vec![0.3, 0.7];
        assert!(!reweight(&mut w, &[f64::NEG_INFINITY, f64::NEG_INFINITY]));
        assert_eq!(w, vec![0.3, 0.7]);
    }

    #[test]
    fn constant_likelihood_leaves_weights_and_mean() {
        let mut ps = set(&[(0.0, 0.0), (10.0, 0.0), (3.0, 7.0)], &[0.2, 0.5, 0.3]);
        let before = ps.posterior_mean_location();
        let w0 = ps.weights().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // Far away from every hypothesis: all predict essentially zero.
        let z = Measurement {
            value: 0.0,
            detected: false,
            position: WorldPoint::new(1e6, 1e6),
            step_index: 0,
        };
        ps.update(&z, &sensor(), &mut rng);
        for (a, b) in ps.weights().iter().zip(&w0) {
            assert!((a - b).abs() < 1e-12);
        }
        let after = ps.posterior_mean_location();
        assert!((after.x - before.x).abs() < 1e-9 && (after.y - before.y).abs() < 1e-9);
    }

    #[test]
    fn resample_resets_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ps = init_prior(&PriorSpec::default(), 500, 0.5, 0.01, &mut rng).unwrap();
        let z = Measurement {
            value: 0.5,
            detected: true,
            position: WorldPoint::new(600.0, 400.0),
            step_index: 0,
        };
        let info = ps.update(&z, &sensor(), &mut rng);
        let sum: f64 = ps.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert_eq!(ps.len(), 500);
        if info.resampled {
            assert!(ps.weights().iter().all(|&w| w == 1.0 / 500.0));
            assert!((ps.ess() - 500.0).abs() < 1e-6);
        }
        assert!(ps
            .particles()
            .iter()
            .all(|p| p.d > 0.0 && p.tau > 0.0 && p.q > 0.0));
    }

    #[test]
    fn systematic_resampling_counts() {
        let idx = systematic_indices(&[0.1, 0.6, 0.3], 0.5);
        assert_eq!(idx, vec![1, 1, 2]);
        let idx = systematic_indices(&[0.25; 4], 0.0);
        assert_eq!(idx, vec![0, 1, 2, 3]);
    }

    #[test]
    fn summaries_hand_cases() {
        let ps = set(&[(0.0, 0.0), (10.0, 0.0)], &[0.25, 0.75]);
        let m = ps.posterior_mean_location();
        assert_relative_eq!(m.x, 7.5);
        assert_eq!(m.y, 0.0);
        let swapped = set(&[(10.0, 0.0), (0.0, 0.0)], &[0.75, 0.25]);
        assert_eq!(swapped.posterior_mean_location(), m);

        let same = set(&[(4.0, 4.0); 3], &[1.0; 3]);
        assert_eq!(same.location_std(), 0.0);
        assert_eq!(same.posterior_mean_location(), WorldPoint::new(4.0, 4.0));
        let two = set(&[(0.0, 0.0), (10.0, 0.0)], &[0.5, 0.5]);
        assert_relative_eq!(two.location_std(), 5.0);

        assert_eq!(same.weighted_rmse(WorldPoint::new(4.0, 4.0)), 0.0);
        let one = set(&[(30.0, 0.0)], &[1.0]);
        assert_relative_eq!(one.weighted_rmse(WorldPoint::new(0.0, 0.0)), 30.0);
        assert_relative_eq!(two.weighted_rmse(WorldPoint::new(0.0, 0.0)), 50f64.sqrt());
    }

    #[test]
    fn circular_mean_of_wind_direction() {
        let mut a = at(0.0, 0.0);
        let mut b = at(0.0, 0.0);
        a.phi = 350.0;
        b.phi = 10.0;
        let ps = ParticleSet::from_particles(vec![a, b], vec![0.5, 0.5], 0.5, [0.0; 8]).unwrap();
        let m = ps.mean_phi();
        assert!(m < 1e-9 || (360.0 - m) < 1e-9, "{m}");
    }

    #[test]
    fn jitter_wraps_wind_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = at(0.0, 0.0);
        p.phi = 359.9;
        let s = [0.0, 0.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0];
        for _ in 0..200 {
            let j = jitter(&p, &s, &mut rng);
            assert!((0.0..360.0).contains(&j.phi));
        }
    }

    #[test]
    fn posterior_csv_has_one_row_per_particle() {
        let ps = set(&[(0.0, 0.0), (10.0, 0.0)], &[0.5, 0.5]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        ps.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().all(|l| l.split(',').count() == 9));
    }
}
