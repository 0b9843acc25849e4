//! Normalized mean square errors and the multi-realization experiment.

mod experiment;
mod nmse;

pub use experiment::{
    depict_bp_maps, run_experiment, run_experiment_on, ExperimentConfig, ExperimentReport,
    MethodScores, MethodSummary, RealizationResult, Summary, METHOD_DEPICT, METHOD_INITIAL,
    METHOD_PNMM,
};
pub use nmse::{
    bp_nmse, match_factors, nmse, nmse_iter, permutations, score_estimate, FactorMatching, Scores,
    Variable,
};
