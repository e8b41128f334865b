//! Source term estimation and informative path planning in cluttered 2D maps.

pub mod baselines;
pub mod error;
pub mod grid;
pub mod harness;
pub mod inference;
pub mod plume;
pub mod tree;
pub mod utility;
pub mod windfield;

pub use baselines::{
    entrotaxis_step, jump_step, skill_score, JumpState, MyopicActionSet, MyopicDecision,
};
pub use error::{Error, Result};
pub use grid::{load_map, save_map, Cell, OccupancyGrid, WorldPoint};
pub use inference::{
    init_prior, Dist, LogNormalSensor, ParticleSet, PriorSpec, Reading, SensorModel, UpdateInfo,
};
pub use plume::{
    expected_concentration, plume_lambda, sample_measurement, wind_unit, GroundTruthField,
    Measurement, PlumeCoeffs, PlumeMode, ReplaySequence, SourceTerm,
};
pub use tree::{
    blossom, cull, expand_tree, extract_paths, groom, plan_from_samples, prune, rgg_radius,
    CandidatePath, GroomReport, PlanResult, PlannerConfig, Tree,
};
pub use utility::{
    entrotaxis_utility, predictive_measurements, select_path, Hypotheses, PredictiveSet,
    UtilityEvaluator,
};
pub use windfield::{
    build_distribution, dijkstra_cost, draw_samples, inlet_states, CostField, SampleDistribution,
};
