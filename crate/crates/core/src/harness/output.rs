//! Files written after a run or sweep.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::config::PlannerKind;
use super::episode::{csv_err, EpisodeLog};
use super::monte_carlo::{GroupMetrics, Metrics};

pub const METRICS_FILE: &str = "metrics.json";
pub const CURVES_FILE: &str = "rmse_curves.csv";
pub const SUMMARY_FILE: &str = "summary.md";
pub const EPISODES_DIR: &str = "episodes";

/// Writes `metrics.json`, `rmse_curves.csv`, `summary.md` and one CSV per
/// episode under `episodes/`. Utility tables are written next to the episode
/// logs when they were recorded.
pub fn emit_outputs(
    metrics: &Metrics,
    logs: &[EpisodeLog],
    out_dir: impl AsRef<Path>,
) -> Result<()> {
    let out = out_dir.as_ref();
    let episodes = out.join(EPISODES_DIR);
    std::fs::create_dir_all(&episodes).map_err(|e| Error::io(&episodes, e))?;
    write_metrics(metrics, out.join(METRICS_FILE))?;
    write_curves(metrics, out.join(CURVES_FILE))?;
    let summary = out.join(SUMMARY_FILE);
    std::fs::write(&summary, summary_markdown(metrics)).map_err(|e| Error::io(&summary, e))?;
    for log in logs {
        log.write_csv(episodes.join(format!("{}.csv", log.id)))?;
        if !log.utility.is_empty() {
            log.write_utility_csv(episodes.join(format!("{}_utility.csv", log.id)))?;
        }
    }
    Ok(())
}

pub fn write_metrics(metrics: &Metrics, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text =
        serde_json::to_string_pretty(metrics).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Metrics> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })
}

/// Column names of the curve file: time, then mean and std per planner in
/// canonical planner order.
pub fn curve_columns(planners: &[PlannerKind]) -> Vec<String> {
    let mut cols = vec!["time".to_string()];
    for p in planners {
        cols.push(format!("{p}_mean"));
        cols.push(format!("{p}_std"));
    }
    cols
}

pub fn write_curves(metrics: &Metrics, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let planners: Vec<PlannerKind> = metrics.curves.iter().map(|c| c.planner).collect();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(curve_columns(&planners))
        .map_err(|e| csv_err(path, e))?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (k, t) in metrics.times.iter().enumerate() {
        let mut row = vec![t.to_string()];
        for c in &metrics.curves {
            row.push(cell(c.mean[k]));
            row.push(cell(c.std[k]));
        }
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn cell(g: Option<&GroupMetrics>) -> String {
    match g {
        None => "-".into(),
        Some(g) if g.runs == 0 => "-".into(),
        Some(g) => match g.mst {
            Some(m) => format!("{:.0}% ({:.0})", 100.0 * g.sr, m),
            None => format!("{:.0}% (-)", 100.0 * g.sr),
        },
    }
}

/// Markdown tables of SR (MST) per planner: downwind starts per source,
/// all starts per source, and the overall average.
pub fn summary_markdown(m: &Metrics) -> String {
    let mut planners: Vec<PlannerKind> = m.groups.iter().map(|g| g.planner).collect();
    planners.dedup();
    let mut sources: Vec<&str> = Vec::new();
    for g in &m.groups {
        if g.group != "all" && !g.group.contains('/') && !sources.contains(&g.group.as_str()) {
            sources.push(&g.group);
        }
    }
    let mut s = String::new();
    let _ = writeln!(s, "# Search summary\n");
    let _ = writeln!(
        s,
        "Master seed {}, budget {} s. Cells show success rate (mean search time in s over successful runs).\n",
        m.master_seed, m.budget_s
    );
    let table = |s: &mut String, title: &str, suffix: &str| {
        let _ = writeln!(s, "## {title}\n");
        let _ = write!(s, "| Planner |");
        for src in &sources {
            let _ = write!(s, " {src} |");
        }
        let _ = writeln!(s);
        let _ = write!(s, "|---|");
        for _ in &sources {
            let _ = write!(s, "---|");
        }
        let _ = writeln!(s);
        for p in &planners {
            let _ = write!(s, "| {p} |");
            for src in &sources {
                let _ = write!(s, " {} |", cell(m.group(*p, &format!("{src}{suffix}"))));
            }
            let _ = writeln!(s);
        }
        let _ = writeln!(s);
    };
    table(&mut s, "Downwind starts", "/downwind");
    table(&mut s, "All starts", "");
    let _ = writeln!(s, "## Overall\n");
    let _ = writeln!(s, "| Planner | Runs | Failed | SR (MST) |");
    let _ = writeln!(s, "|---|---|---|---|");
    for p in &planners {
        if let Some(g) = m.group(*p, "all") {
            let _ = writeln!(s, "| {p} | {} | {} | {} |", g.runs, g.failed, cell(Some(g)));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::monte_carlo::aggregate;

    #[test]
    fn empty_metrics_still_produce_files() {
        let m = aggregate(&[], &[], 1, 60.0, 120.0);
        let dir = tempfile::tempdir().unwrap();
        emit_outputs(&m, &[], dir.path()).unwrap();
        assert_eq!(read_metrics(dir.path().join(METRICS_FILE)).unwrap(), m);
        let mut r = csv::Reader::from_path(dir.path().join(CURVES_FILE)).unwrap();
        assert_eq!(r.headers().unwrap().len(), 1);
        assert_eq!(r.records().count(), 3);
        let md = std::fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
        assert!(md.contains("## Overall"));
        assert!(dir.path().join(EPISODES_DIR).is_dir());
    }

    #[test]
    fn unwritable_directory_errors() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("f");
        std::fs::write(&file, "x").unwrap();
        let m = aggregate(&[], &[], 1, 60.0, 120.0);
        assert!(emit_outputs(&m, &[], file.join("sub")).is_err());
    }

    #[test]
    fn curve_columns_in_order() {
        assert_eq!(
            curve_columns(&PlannerKind::ALL),
            vec![
                "time",
                "entrotaxis_mean",
                "entrotaxis_std",
                "jump_mean",
                "jump_std",
                "uniform_tree_mean",
                "uniform_tree_std",
                "informed_tree_mean",
                "informed_tree_std"
            ]
        );
    }
}
