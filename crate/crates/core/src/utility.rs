//! Expected-entropy utility over candidate sampling locations.
//!
//! For a candidate point, a small set of hypotheses is resampled from the
//! posterior and each produces a predicted reading there. Every predicted
//! reading is folded into the full particle set as if it had been observed,
//! and the utility is the mean entropy of those hypothetical posteriors.
//! Lower is better: the chosen location is the one whose reading is expected
//! to leave the least uncertainty about the source.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::WorldPoint;
use crate::inference::{ParticleSet, Reading, SensorModel};
use crate::tree::CandidatePath;

/// Hypotheses shared by every candidate in one planning step: resampled
/// particle indices and the noise draw attached to each.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypotheses {
    indices: Vec<usize>,
    eps: Vec<f64>,
}

impl Hypotheses {
    /// Draws `n_z` particle indices proportionally to weight. With
    /// `noiseless` every predicted reading uses the expected value.
    pub fn draw<R: Rng + ?Sized>(
        ps: &ParticleSet,
        n_z: usize,
        noiseless: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if n_z == 0 {
            return Err(Error::Config("n_z must be at least 1".into()));
        }
        let dist = WeightedIndex::new(ps.weights())
            .map_err(|e| Error::Caller(format!("bad weights: {e}")))?;
        let mut indices = Vec::with_capacity(n_z);
        let mut eps = Vec::with_capacity(n_z);
        for _ in 0..n_z {
            indices.push(dist.sample(rng));
            eps.push(if noiseless {
                0.0
            } else {
                rng.sample(StandardNormal)
            });
        }
        Ok(Self { indices, eps })
    }

    pub fn from_parts(indices: Vec<usize>, eps: Vec<f64>) -> Self {
        assert_eq!(indices.len(), eps.len());
        Self { indices, eps }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

const NEGLIGIBLE_LOG_MASS: f64 = -60.0;

/// Predicted readings at one candidate point.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSet {
    pub hypotheses: Vec<usize>,
    pub readings: Vec<Reading>,
}

/// Evaluates the utility at many points against one posterior snapshot.
pub struct UtilityEvaluator<'a, M: SensorModel + ?Sized> {
    ps: &'a ParticleSet,
    model: &'a M,
    hyp: Hypotheses,
    ln_w: Vec<f64>,
    current_entropy: f64,
    pred: Vec<f64>,
    log_lik: Vec<f64>,
    groups: HashMap<(bool, u64), usize>,
}

impl<'a, M: SensorModel + ?Sized> UtilityEvaluator<'a, M> {
    pub fn new(ps: &'a ParticleSet, model: &'a M, hyp: Hypotheses) -> Self {
        let ln_w = ps
            .weights()
            .iter()
            .map(|&w| if w > 0.0 { w.ln() } else { f64::NEG_INFINITY })
            .collect();
        Self {
            ps,
            model,
            hyp,
            ln_w,
            current_entropy: ps.weight_entropy(),
            pred: Vec::with_capacity(ps.len()),
            log_lik: Vec::with_capacity(ps.len()),
            groups: HashMap::new(),
        }
    }

    pub fn hypotheses(&self) -> &Hypotheses {
        &self.hyp
    }

    pub fn predictive(&mut self, x: WorldPoint) -> PredictiveSet {
        self.model.predict(self.ps, x, &mut self.pred);
        self.readings()
    }

    fn readings(&self) -> PredictiveSet {
        let readings = self
            .hyp
            .indices
            .iter()
            .zip(&self.hyp.eps)
            .map(|(&i, &e)| self.model.sample(self.pred[i], e))
            .collect();
        PredictiveSet {
            hypotheses: self.hyp.indices.clone(),
            readings,
        }
    }

    /// Mean entropy of the hypothetical posteriors after a reading at `x`.
    pub fn evaluate(&mut self, x: WorldPoint) -> f64 {
        self.model.predict(self.ps, x, &mut self.pred);
        let set = self.readings();
        // Identical predicted readings give identical posteriors.
        self.groups.clear();
        let mut unique: Vec<(Reading, usize)> = Vec::new();
        for r in &set.readings {
            let key = (r.detected, r.value.to_bits());
            match self.groups.get(&key) {
                Some(&g) => unique[g].1 += 1,
                None => {
                    self.groups.insert(key, unique.len());
                    unique.push((*r, 1));
                }
            }
        }
        let mut total = 0.0;
        for (reading, count) in &unique {
            let h = self.posterior_entropy(reading).unwrap_or_else(|| {
                log::debug!(
                    "predicted reading has zero evidence at ({:.1}, {:.1})",
                    x.x,
                    x.y
                );
                self.current_entropy
            });
            total += h * *count as f64;
        }
        total / set.readings.len() as f64
    }

    /// Entropy of the reweighted particle set, or `None` if every particle
    /// has zero posterior mass.
    fn posterior_entropy(&mut self, reading: &Reading) -> Option<f64> {
        // With a_i = ln w_i + ln L_i and p_i = exp(a_i) / Z,
        // H = ln Z - sum p_i a_i.
        self.model
            .log_likelihoods(reading, &self.pred, &mut self.log_lik);
        let mut top = f64::NEG_INFINITY;
        for (lw, &ll) in self.ln_w.iter().zip(&self.log_lik) {
            if *lw > f64::NEG_INFINITY {
                top = top.max(lw + ll);
            }
        }
        if !top.is_finite() {
            return None;
        }
        let (mut z, mut za) = (0.0, 0.0);
        for (lw, &ll) in self.ln_w.iter().zip(&self.log_lik) {
            if *lw == f64::NEG_INFINITY {
                continue;
            }
            let a = lw + ll - top;
            // e^-60 times any realistic particle count is far below f64 resolution of z >= 1.
            if a < NEGLIGIBLE_LOG_MASS {
                continue;
            }
            let e = a.exp();
            z += e;
            za += e * a;
        }
        Some((z.ln() - za / z).max(0.0))
    }
}

/// Draws `n_z` hypotheses and the readings they predict at `x`.
pub fn predictive_measurements<M: SensorModel + ?Sized, R: Rng + ?Sized>(
    ps: &ParticleSet,
    model: &M,
    x: WorldPoint,
    n_z: usize,
    noiseless: bool,
    rng: &mut R,
) -> Result<PredictiveSet> {
    let hyp = Hypotheses::draw(ps, n_z, noiseless, rng)?;
    Ok(UtilityEvaluator::new(ps, model, hyp).predictive(x))
}

/// Utility of sampling at `x`; lies in `[0, ln n]`.
pub fn entrotaxis_utility<M: SensorModel + ?Sized, R: Rng + ?Sized>(
    ps: &ParticleSet,
    model: &M,
    x: WorldPoint,
    n_z: usize,
    noiseless: bool,
    rng: &mut R,
) -> Result<f64> {
    let hyp = Hypotheses::draw(ps, n_z, noiseless, rng)?;
    Ok(UtilityEvaluator::new(ps, model, hyp).evaluate(x))
}

/// Index of the best candidate and every candidate's score.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub scores: Vec<f64>,
}

/// Orders candidates by score, then path length, then terminal point.
pub fn better(a: (f64, f64, WorldPoint), b: (f64, f64, WorldPoint)) -> bool {
    a.0.total_cmp(&b.0)
        .then(a.1.total_cmp(&b.1))
        .then(a.2.x.total_cmp(&b.2.x))
        .then(a.2.y.total_cmp(&b.2.y))
        .is_lt()
}

/// Scores every candidate's terminal point with one shared hypothesis draw
/// and returns the minimiser.
pub fn select_path<M: SensorModel + ?Sized, R: Rng + ?Sized>(
    sigma: &[CandidatePath],
    ps: &ParticleSet,
    model: &M,
    n_z: usize,
    noiseless: bool,
    rng: &mut R,
) -> Result<Selection> {
    if sigma.is_empty() {
        return Err(Error::Planner("no candidate paths to choose from".into()));
    }
    let hyp = Hypotheses::draw(ps, n_z, noiseless, rng)?;
    let mut eval = UtilityEvaluator::new(ps, model, hyp);
    let scores: Vec<f64> = sigma.iter().map(|c| eval.evaluate(c.terminal())).collect();
    let mut best = 0;
    for i in 1..sigma.len() {
        if better(
            (scores[i], sigma[i].length, sigma[i].terminal()),
            (scores[best], sigma[best].length, sigma[best].terminal()),
        ) {
            best = i;
        }
    }
    Ok(Selection {
        index: best,
        scores,
    })
}
