//! Sweep outputs checked against the per-episode logs they were built from.

use std::collections::BTreeMap;
use std::path::Path;

use ste_core::harness::{
    emit_outputs, read_metrics, run_monte_carlo, EpisodeDumps, PlannerKind, SweepConfig,
    EPISODES_DIR, METRICS_FILE,
};

fn small_sweep(workers: usize) -> SweepConfig {
    let mut cfg = SweepConfig {
        master_seed: 77,
        repeats: 2,
        workers,
        starts: vec![[700.0, 390.0], [1100.0, 325.0]],
        ..Default::default()
    };
    cfg.base.pf.n = 400;
    cfg.base.utility.n_z = 6;
    cfg.base.tree.batch_size = 400;
    cfg.base.robot.budget_s = 600.0;
    cfg
}

/// Reads `time` and `rmse` columns from every episode CSV and recomputes
/// runs, successes and mean success time per planner.
fn recompute(dir: &Path, radius: f64, budget: f64) -> BTreeMap<String, (usize, usize, f64)> {
    let mut out: BTreeMap<String, (usize, usize, f64)> = BTreeMap::new();
    for entry in std::fs::read_dir(dir.join(EPISODES_DIR)).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_stem().unwrap().to_str().unwrap().to_string();
        let planner = PlannerKind::ALL
            .iter()
            .map(|p| p.name())
            .find(|p| name.starts_with(&format!("{p}-")))
            .unwrap()
            .to_string();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let ti = header.iter().position(|h| *h == "time").unwrap();
        let ri = header.iter().position(|h| *h == "rmse").unwrap();
        let hit = lines
            .map(|l| l.split(',').collect::<Vec<_>>())
            .map(|f| (f[ti].parse::<f64>().unwrap(), f[ri].parse::<f64>().unwrap()))
            .find(|&(t, r)| r < radius && t <= budget)
            .map(|(t, _)| t);
        let e = out.entry(planner).or_default();
        e.0 += 1;
        if let Some(t) = hit {
            e.1 += 1;
            e.2 += t;
        }
    }
    out
}

#[test]
fn metrics_match_episode_logs_and_ignore_worker_count() {
    let one = tempfile::tempdir().unwrap();
    let two = tempfile::tempdir().unwrap();
    let cfg1 = small_sweep(1);
    let (m1, logs1) = run_monte_carlo(&cfg1, &EpisodeDumps::default()).unwrap();
    emit_outputs(&m1, &logs1, one.path()).unwrap();
    let (m2, logs2) = run_monte_carlo(&small_sweep(2), &EpisodeDumps::default()).unwrap();
    emit_outputs(&m2, &logs2, two.path()).unwrap();

    let a = std::fs::read(one.path().join(METRICS_FILE)).unwrap();
    let b = std::fs::read(two.path().join(METRICS_FILE)).unwrap();
    assert!(a == b, "metrics differ between 1 and 2 workers");
    assert_eq!(read_metrics(one.path().join(METRICS_FILE)).unwrap(), m1);

    let expected_runs = 4 * 3 * 2 * 2;
    assert_eq!(logs1.len(), expected_runs);
    let counts = recompute(
        one.path(),
        cfg1.base.robot.success_radius,
        cfg1.base.robot.budget_s,
    );
    for p in PlannerKind::ALL {
        let g = m1.group(p, "all").unwrap();
        let (runs, hits, total) = counts[p.name()];
        assert_eq!(g.runs, runs, "{p}");
        assert_eq!(g.successes, hits, "{p}");
        assert!((g.sr - hits as f64 / runs as f64).abs() < 1e-12);
        match g.mst {
            Some(mst) => assert!((mst - total / hits as f64).abs() < 1e-9, "{p}: {mst}"),
            None => assert_eq!(hits, 0),
        }
    }
}
