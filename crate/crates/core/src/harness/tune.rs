//! Grid search over the jump planner's memory settings, ranked by skill score.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::skill_score;
use crate::error::{Error, Result};

use super::config::{resolve, PlannerKind, ScenarioConfig};
use super::episode::{csv_err, EpisodeContext, EpisodeDumps};
use super::monte_carlo::{episode_seed, reference_cases, run_jobs, success_time, Job, SourceCase};
use super::scenario::reference_starts;

fn default_n_jump() -> Vec<usize> {
    vec![2, 4, 6, 8, 10]
}

fn default_m_jump() -> Vec<usize> {
    vec![10, 12, 14]
}

fn default_episodes() -> usize {
    10
}

fn half() -> f64 {
    0.5
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_n_jump")]
    pub n_jump: Vec<usize>,
    #[serde(default = "default_m_jump")]
    pub m_jump: Vec<usize>,
    /// Episodes per (n_jump, m_jump) cell.
    #[serde(default = "default_episodes")]
    pub episodes_per_cell: usize,
    #[serde(default = "half")]
    pub w_sr: f64,
    #[serde(default = "half")]
    pub w_mst: f64,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub sources: Vec<SourceCase>,
    #[serde(default)]
    pub starts: Vec<[f64; 2]>,
    #[serde(default)]
    pub base: ScenarioConfig,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            n_jump: default_n_jump(),
            m_jump: default_m_jump(),
            episodes_per_cell: default_episodes(),
            w_sr: 0.5,
            w_mst: 0.5,
            workers: 1,
            sources: Vec::new(),
            starts: Vec::new(),
            base: ScenarioConfig::default(),
        }
    }
}

impl TuneConfig {
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

    fn validate(&self) -> Result<()> {
        if self.n_jump.is_empty() || self.m_jump.is_empty() || self.episodes_per_cell == 0 {
            return Err(Error::Config(
                "tuning grid and episode count must be non-empty".into(),
            ));
        }
        self.base.validate()
    }
}

/// Outcome of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillCell {
    pub n_jump: usize,
    pub m_jump: usize,
    pub runs: usize,
    pub successes: usize,
    pub sr: f64,
    /// Mean search time; runs without success count as the full budget.
    pub mst: f64,
    pub score: f64,
}

/// Runs the jump planner on every (n_jump, m_jump) pair. Episode `e` of each
/// cell uses the same source, start and seed in every cell.
pub fn tune_jump(cfg: &TuneConfig) -> Result<Vec<SkillCell>> {
    cfg.validate()?;
    let cases = if cfg.sources.is_empty() {
        reference_cases()
    } else {
        cfg.sources.clone()
    };
    let starts: Vec<[f64; 2]> = if cfg.starts.is_empty() {
        reference_starts().iter().map(|p| [p.x, p.y]).collect()
    } else {
        cfg.starts.clone()
    };
    let contexts = cases
        .iter()
        .map(|case| {
            let mut c = cfg.base.clone();
            c.source = case.source;
            if let Some(m) = &case.map {
                c.map = m.clone();
            }
            EpisodeContext::new(&c)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for &n in &cfg.n_jump {
        for &m in &cfg.m_jump {
            for e in 0..cfg.episodes_per_cell {
                let si = e % cases.len();
                let pi = e % starts.len();
                let mut c = cfg.base.clone();
                c.planner = PlannerKind::Jump;
                c.baseline.n_jump = n;
                c.baseline.m_jump = m;
                c.seed = episode_seed(cfg.master_seed, si, pi, e);
                c.source = cases[si].source;
                c.start = starts[pi];
                if let Some(map) = &cases[si].map {
                    c.map = map.clone();
                }
                jobs.push(Job {
                    id: format!("jump-n{n}-m{m}-e{e:03}"),
                    source: si,
                    start: pi,
                    repeat: e,
                    config: c,
                });
            }
        }
    }
    let logs = run_jobs(&jobs, &contexts, cfg.workers, &EpisodeDumps::default())?;
    let budget = cfg.base.robot.budget_s;
    let mut cells = Vec::new();
    for (k, chunk) in logs.chunks(cfg.episodes_per_cell).enumerate() {
        let n = cfg.n_jump[k / cfg.m_jump.len()];
        let m = cfg.m_jump[k % cfg.m_jump.len()];
        let times: Vec<Option<f64>> = chunk.iter().map(success_time).collect();
        let successes = times.iter().flatten().count();
        let runs = chunk.len();
        cells.push(SkillCell {
            n_jump: n,
            m_jump: m,
            runs,
            successes,
            sr: successes as f64 / runs as f64,
            mst: times.iter().map(|t| t.unwrap_or(budget)).sum::<f64>() / runs as f64,
            score: 0.0,
        });
    }
    let sr: Vec<f64> = cells.iter().map(|c| c.sr).collect();
    let mst: Vec<f64> = cells.iter().map(|c| c.mst).collect();
    for (c, s) in cells
        .iter_mut()
        .zip(skill_score(&sr, &mst, cfg.w_sr, cfg.w_mst)?)
    {
        c.score = s;
    }
    Ok(cells)
}

/// `skill_scores.csv` (one row per cell) and `skill_grid.csv` (n_jump rows by
/// m_jump columns).
pub fn write_skill_outputs(cells: &[SkillCell], out_dir: impl AsRef<Path>) -> Result<()> {
    let out = out_dir.as_ref();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join("skill_scores.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    if cells.is_empty() {
        w.write_record([
            "n_jump",
            "m_jump",
            "runs",
            "successes",
            "sr",
            "mst",
            "score",
        ])
        .map_err(|e| csv_err(&path, e))?;
    }
    for c in cells {
        w.serialize(c).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let mut ns: Vec<usize> = cells.iter().map(|c| c.n_jump).collect();
    ns.dedup();
    let mut ms: Vec<usize> = cells.iter().map(|c| c.m_jump).collect();
    ms.sort_unstable();
    ms.dedup();
    let path = out.join("skill_grid.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    let mut header = vec!["n_jump".to_string()];
    header.extend(ms.iter().map(|m| format!("m_jump_{m}")));
    w.write_record(&header).map_err(|e| csv_err(&path, e))?;
    for n in ns {
        let mut row = vec![n.to_string()];
        for m in &ms {
            let v = cells
                .iter()
                .find(|c| c.n_jump == n && c.m_jump == *m)
                .map(|c| c.score.to_string());
            row.push(v.unwrap_or_default());
        }
        w.write_record(&row).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_grid_runs_and_writes() {
        let mut cfg = TuneConfig {
            n_jump: vec![2, 4],
            m_jump: vec![10],
            episodes_per_cell: 2,
            ..Default::default()
        };
        cfg.base.pf.n = 200;
        cfg.base.utility.n_z = 4;
        cfg.base.robot.budget_s = 60.0;
        let cells = tune_jump(&cfg).unwrap();
        assert_eq!(cells.len(), 2);
        assert!(cells
            .iter()
            .all(|c| c.runs == 2 && c.score >= 0.0 && c.score <= 1.0));
        let dir = tempfile::tempdir().unwrap();
        write_skill_outputs(&cells, dir.path()).unwrap();
        let grid = std::fs::read_to_string(dir.path().join("skill_grid.csv")).unwrap();
        assert_eq!(grid.lines().count(), 3);
        assert!(grid.starts_with("n_jump,m_jump_10\n"));
    }
}
