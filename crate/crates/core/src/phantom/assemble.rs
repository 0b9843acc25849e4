use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    binding_potential_map, delivery_ratio_map, reconstruct, AcquisitionTimeline, DynamicImage,
    FactorModel, GridDims, Interval, KineticBounds, KineticNonlinearity, F18_DECAY_PER_MIN,
};
use crate::phantom::{
    add_noise, blur_frames, frtm_to_gunn, generate_factor_tacs, generate_geometry,
    proportions_from_masks_hard, ArterialInput, GeometryConfig, Masks, NoiseRealization,
    UptakeParams,
};
use crate::solver::{palm_run, BlockSelection, PnmmProblem, SolverConfig, Variables};

/// Specific-binding kinetics of one tissue (full reference tissue model,
/// with the tissue's own non-specific TAC as reference).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BindingParams {
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

/// Settings of the restricted solver run that produces the reference
/// proportions and coefficients of the blurred phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthPassConfig {
    pub epsilon: f64,
    pub max_iters: usize,
    /// Coefficient box used for every `B_i` in this pass.
    pub b_bounds: Interval,
    pub eta: f64,
    pub lambda: f64,
}

impl Default for TruthPassConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            max_iters: 3000,
            b_bounds: Interval::new(-1.0, 1.0),
            eta: SolverConfig::default().eta,
            lambda: SolverConfig::default().lambda,
        }
    }
}

/// 27 frames, 1 to 15 min, 90 min in total.
pub fn default_frame_durations() -> Vec<f64> {
    let mut d = Vec::with_capacity(27);
    for (len, count) in [
        (1.0, 10),
        (2.0, 6),
        (3.0, 4),
        (5.0, 3),
        (6.0, 1),
        (10.0, 2),
        (15.0, 1),
    ] {
        d.extend(std::iter::repeat_n(len, count));
    }
    d
}

fn default_voxel_size() -> [f64; 3] {
    [2.0; 3]
}
fn default_fwhm() -> f64 {
    4.4
}
fn default_snr() -> f64 {
    20.0
}
fn default_gray() -> UptakeParams {
    UptakeParams { k1: 0.12, k2: 0.05 }
}
fn default_white() -> UptakeParams {
    UptakeParams {
        k1: 0.08,
        k2: 0.025,
    }
}
fn default_binding() -> [BindingParams; 2] {
    [
        BindingParams {
            k2: 0.4,
            k3: 0.15,
            k4: 0.01,
        },
        BindingParams {
            k2: 0.3,
            k3: 0.15,
            k4: 0.01,
        },
    ]
}
fn default_r1_levels() -> Vec<f64> {
    vec![1.0, 1.6]
}

/// Phantom description. Only the grid size is mandatory in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomConfig {
    pub grid_dims: [usize; 3],
    #[serde(default = "default_voxel_size")]
    pub voxel_size_mm: [f64; 3],
    #[serde(default = "default_frame_durations")]
    pub frame_durations: Vec<f64>,
    #[serde(default = "default_fwhm")]
    pub psf_fwhm_mm: f64,
    /// Pooled signal-to-noise ratio; `inf` disables noise.
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    #[serde(default)]
    pub arterial_input: ArterialInput,
    #[serde(default = "default_gray")]
    pub gray: UptakeParams,
    #[serde(default = "default_white")]
    pub white: UptakeParams,
    /// Binding kinetics in gray and white matter lesions.
    #[serde(default = "default_binding")]
    pub binding: [BindingParams; 2],
    /// One lesion component per delivery-ratio level in each tissue.
    #[serde(default = "default_r1_levels")]
    pub r1_levels: Vec<f64>,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub truth: TruthPassConfig,
}

impl Default for PhantomConfig {
    /// Scaled 32 x 32 x 16 phantom.
    fn default() -> Self {
        Self {
            grid_dims: [32, 32, 16],
            voxel_size_mm: default_voxel_size(),
            frame_durations: default_frame_durations(),
            psf_fwhm_mm: default_fwhm(),
            snr_db: default_snr(),
            arterial_input: ArterialInput::default(),
            gray: default_gray(),
            white: default_white(),
            binding: default_binding(),
            r1_levels: default_r1_levels(),
            geometry: GeometryConfig::default(),
            truth: TruthPassConfig::default(),
        }
    }
}

impl PhantomConfig {
    pub fn full_size() -> Self {
        Self {
            grid_dims: [128, 128, 64],
            ..Self::default()
        }
    }

    pub fn dims(&self) -> GridDims {
        let [nx, ny, nz] = self.grid_dims;
        GridDims::new(nx, ny, nz)
    }

    pub fn timeline(&self) -> Result<AcquisitionTimeline> {
        AcquisitionTimeline::from_durations(self.frame_durations.clone())
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .voxel_size_mm
            .iter()
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(Error::Config(
                "voxel_size_mm entries must be positive".into(),
            ));
        }
        if !(self.psf_fwhm_mm >= 0.0 && self.psf_fwhm_mm.is_finite()) {
            return Err(Error::Config(format!(
                "psf_fwhm_mm must be >= 0, got {}",
                self.psf_fwhm_mm
            )));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::Config(format!(
                "snr_db must be a number or inf, got {}",
                self.snr_db
            )));
        }
        if self.r1_levels.is_empty() || self.r1_levels.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Config(
                "r1_levels must be a non-empty list of positive values".into(),
            ));
        }
        for p in [self.gray, self.white] {
            if !(p.k1 > 0.0 && p.k2 > 0.0) {
                return Err(Error::Config(format!(
                    "uptake rates must be positive: {p:?}"
                )));
            }
        }
        self.timeline()
            .map_err(|e| Error::Config(format!("frame_durations: {e}")))?;
        Ok(())
    }

    /// Coefficient/rate bounds of the ground-truth pass.
    pub fn truth_bounds(&self) -> KineticBounds {
        let iv = self.truth.b_bounds;
        KineticBounds::uniform_b(2, iv.lo, iv.hi, Interval::new(F18_DECAY_PER_MIN, 6.0))
    }
}

/// Everything known about a synthetic phantom.
#[derive(Debug, Clone)]
pub struct PhantomGroundTruth {
    pub config: PhantomConfig,
    pub dims: GridDims,
    pub timeline: AcquisitionTimeline,
    pub masks: Masks,
    /// Factor TACs `[gray, white, blood]`.
    pub m: Array2<f64>,
    /// Proportions after the restricted solver pass.
    pub a: Array2<f64>,
    pub b: Vec<Array2<f64>>,
    pub alpha: Array2<f64>,
    /// Hard (mask) proportions and lesion coefficients before blurring.
    pub a_hard: Array2<f64>,
    pub b_hard: Vec<Array2<f64>>,
    pub r1: Array2<f64>,
    pub bp: Array2<f64>,
    /// Blurred image without noise.
    pub noiseless: Array2<f64>,
    pub noisy: Array2<f64>,
    pub realized_snr_db: f64,
    pub truth_pass_iterations: usize,
}

impl PhantomGroundTruth {
    fn wrap(&self, data: Array2<f64>) -> DynamicImage {
        DynamicImage::new(
            data,
            self.dims,
            self.config.voxel_size_mm,
            self.timeline.clone(),
        )
        .expect("phantom shapes are consistent")
    }

    pub fn noisy_image(&self) -> DynamicImage {
        self.wrap(self.noisy.clone())
    }

    pub fn noiseless_image(&self) -> DynamicImage {
        self.wrap(self.noiseless.clone())
    }

    /// A fresh noise draw on the same noiseless image.
    pub fn realization(&self, seed: u64) -> NoiseRealization {
        add_noise(&self.noiseless, self.config.snr_db, seed)
    }

    pub fn kinetics(&self) -> Result<KineticNonlinearity> {
        KineticNonlinearity::new(
            self.b.clone(),
            self.alpha.clone(),
            self.config.truth_bounds(),
        )
    }

    pub fn factor_model(&self) -> Result<FactorModel> {
        FactorModel::new(self.m.clone(), self.a.clone())
    }
}

/// Builds the phantom: masks, TACs and lesion kinetics, the blurred
/// noiseless image, reference proportions/coefficients from a solver pass
/// with factors and rates fixed, and one noisy realization.
pub fn assemble_phantom(cfg: &PhantomConfig, noise_seed: u64) -> Result<PhantomGroundTruth> {
    cfg.validate()?;
    let dims = cfg.dims();
    let timeline = cfg.timeline()?;
    let masks = generate_geometry(dims, &cfg.geometry, cfg.r1_levels.len())?;
    let m = generate_factor_tacs(&cfg.arterial_input, cfg.gray, cfg.white, &timeline);
    let n = dims.n_voxels();

    let mut alpha = Array2::zeros((2, 2));
    let mut b_hard = vec![Array2::zeros((2, n)); 3];
    for (t, (binding, lesion)) in cfg.binding.iter().zip(masks.lesions()).enumerate() {
        let per_level: Vec<_> = cfg
            .r1_levels
            .iter()
            .map(|&r1| frtm_to_gunn(r1, binding.k2, binding.k3, binding.k4))
            .collect::<Result<_>>()?;
        alpha[[t, 0]] = per_level[0].alpha[0];
        alpha[[t, 1]] = per_level[0].alpha[1];
        for v in (0..n).filter(|&v| lesion[v]) {
            let c = per_level[masks.lesion_level[v].expect("lesion voxel has a level")];
            b_hard[0][[t, v]] = c.b0;
            b_hard[1][[t, v]] = c.b[0];
            b_hard[2][[t, v]] = c.b[1];
        }
    }
    let a_hard = proportions_from_masks_hard(&masks)?;
    let bounds = cfg.truth_bounds();
    let kin_hard = KineticNonlinearity::new(b_hard.clone(), alpha.clone(), bounds.clone())?;
    let model_hard = FactorModel::new(m.clone(), a_hard.clone())?;
    let sharp = reconstruct(&model_hard, &kin_hard, &timeline)?;
    let noiseless = blur_frames(&sharp, dims, cfg.psf_fwhm_mm, cfg.voxel_size_mm);

    let solver_cfg = SolverConfig {
        bounds,
        eta: cfg.truth.eta,
        lambda: cfg.truth.lambda,
        ..SolverConfig::default()
    }
    .restricted(BlockSelection::PROPORTIONS_AND_COEFFS, cfg.truth.epsilon);
    let solver_cfg = SolverConfig {
        max_iters: cfg.truth.max_iters,
        ..solver_cfg
    };
    let problem = PnmmProblem::new(
        noiseless.clone(),
        dims,
        timeline.clone(),
        m.clone(),
        solver_cfg,
    )?;
    let state = palm_run(
        &problem,
        Variables {
            m: m.clone(),
            a: a_hard.clone(),
            b: b_hard.clone(),
            alpha: alpha.clone(),
        },
    )?;
    log::info!(
        "ground-truth pass finished after {} iterations ({:?})",
        state.iterations,
        state.stop
    );
    let vars = state.vars;
    let kin = KineticNonlinearity::new(vars.b.clone(), vars.alpha.clone(), cfg.truth_bounds())?;
    let r1 = delivery_ratio_map(&kin);
    let bp = binding_potential_map(&kin)?;
    let noise = add_noise(&noiseless, cfg.snr_db, noise_seed);

    Ok(PhantomGroundTruth {
        config: cfg.clone(),
        dims,
        timeline,
        masks,
        m,
        a: vars.a,
        b: vars.b,
        alpha: vars.alpha,
        a_hard,
        b_hard,
        r1,
        bp,
        noiseless,
        noisy: noise.noisy,
        realized_snr_db: noise.realized_snr_db,
        truth_pass_iterations: state.iterations,
    })
}
