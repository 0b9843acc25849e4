//! Cost function, block gradients, Lipschitz constants, projections and
//! the proximal alternating linearized minimization loop.

mod config;
mod init;
mod palm;
mod pipeline;
mod problem;
mod projections;
mod spatial;

pub use config::{BlockSelection, SolverConfig};
pub use init::{init_factors_from_auc, proportions_from_masks, MIN_BAND_VOXELS};
pub use palm::{
    default_rates, palm_run, LipschitzLog, PalmWorkspace, SolverState, StopReason, TraceRow,
};
pub use pipeline::{initial_variables, initialization_pass, pnmm_pipeline, PipelineOutput};
pub use problem::{group_norm, ObjectiveTerms, PnmmProblem, Variables};
pub use projections::{project_nonneg, project_simplex, project_simplex_columns, prox_b};
pub use spatial::SpatialOperator;
