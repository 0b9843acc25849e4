use crate::error::{Error, Result};
use crate::model::DynamicImage;
use crate::solver::{
    default_rates, init_factors_from_auc, palm_run, proportions_from_masks, BlockSelection,
    PnmmProblem, SolverConfig, SolverState, Variables,
};

/// Result of the full unmixing procedure.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Starting point of the main run (factors from the AUC band, mask
    /// proportions, kinetics fitted with everything else held fixed).
    pub init: Variables,
    pub init_state: SolverState,
    pub state: SolverState,
}

/// Initial iterate before any solver pass: AUC-band factors, hard mask
/// proportions, zero coefficients and geometrically spread rates.
pub fn initial_variables(
    image: &DynamicImage,
    class_masks: &[Vec<bool>],
    cfg: &SolverConfig,
) -> Result<Variables> {
    if class_masks.len() < 2 {
        return Err(Error::Config(format!(
            "need at least one tissue mask plus blood, got {} masks",
            class_masks.len()
        )));
    }
    let m = init_factors_from_auc(image.data.view(), class_masks, &image.timeline)?;
    let a = proportions_from_masks(class_masks)?;
    let kt = class_masks.len() - 1;
    let n = image.n_voxels();
    let v = cfg.bounds.n_rates();
    let b = vec![ndarray::Array2::zeros((kt, n)); v + 1];
    let alpha = default_rates(kt, &cfg.bounds);
    Ok(Variables { m, a, b, alpha })
}

/// Initial iterate followed by a kinetics-only pass (`B` and `alpha`
/// updated, factors and proportions fixed). Returns the iterate before the
/// pass and the pass itself.
pub fn initialization_pass(
    image: &DynamicImage,
    class_masks: &[Vec<bool>],
    cfg: &SolverConfig,
) -> Result<(Variables, SolverState)> {
    cfg.validate()?;
    let start = initial_variables(image, class_masks, cfg)?;
    let init_cfg = cfg.restricted(BlockSelection::KINETICS_ONLY, cfg.epsilon);
    let init_problem = PnmmProblem::from_image(image, start.m.clone(), init_cfg)?;
    let init_state = palm_run(&init_problem, start.clone())?;
    log::info!(
        "initial kinetics pass: {} iterations ({:?})",
        init_state.iterations,
        init_state.stop
    );
    Ok((start, init_state))
}

/// Initialization, a kinetics-only pass to fit `B` and `alpha`, then the
/// full alternating run anchored to the initial factors.
pub fn pnmm_pipeline(
    image: &DynamicImage,
    class_masks: &[Vec<bool>],
    cfg: &SolverConfig,
) -> Result<PipelineOutput> {
    let (start, init_state) = initialization_pass(image, class_masks, cfg)?;
    let init = init_state.vars.clone();
    let problem = PnmmProblem::from_image(image, start.m, cfg.clone())?;
    let state = palm_run(&problem, init.clone())?;
    log::info!(
        "unmixing: {} iterations ({:?}), objective {:.6e}",
        state.iterations,
        state.stop,
        state.final_objective()
    );
    Ok(PipelineOutput {
        init,
        init_state,
        state,
    })
}
