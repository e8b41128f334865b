//! Episode loop, Monte Carlo sweeps and their output files.

pub mod config;
pub mod episode;
pub mod monte_carlo;
pub mod output;
pub mod scenario;
pub mod tune;

pub use config::{
    BaselineConfig, InferenceConfig, MapSpec, OutputConfig, PfConfig, PlannerKind, PlumeConfig,
    RobotConfig, ScenarioConfig, SensorConfig, SourceConfig, UtilityConfig,
};
pub use episode::{
    run_episode, run_episode_with, Action, EpisodeContext, EpisodeDumps, EpisodeLog, EpisodeStatus,
    StepRecord, UtilityRow, STEP_COLUMNS,
};
pub use monte_carlo::{
    aggregate, episode_seed, expand_jobs, is_downwind, reference_cases, run_monte_carlo,
    success_time, time_lattice, EpisodeLabel, EpisodeSummary, GroupMetrics, Metrics, RmseCurve,
    SourceCase, SweepConfig,
};
pub use output::{
    curve_columns, emit_outputs, read_metrics, CURVES_FILE, EPISODES_DIR, METRICS_FILE,
    SUMMARY_FILE,
};
pub use scenario::{builtin_map, reference_sources, reference_starts, BuiltinMap, ReferenceSource};
pub use tune::{tune_jump, write_skill_outputs, SkillCell, TuneConfig};
