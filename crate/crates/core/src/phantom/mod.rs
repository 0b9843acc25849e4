//! Procedural dynamic-PET phantom with known factors, proportions and
//! binding kinetics.

mod assemble;
mod blur;
mod frtm;
mod geometry;
mod noise;
mod tacs;

pub use assemble::{
    assemble_phantom, default_frame_durations, BindingParams, PhantomConfig, PhantomGroundTruth,
    TruthPassConfig,
};
pub use blur::{blur_frames, blur_volume, fwhm_to_sigma, gaussian_kernel};
pub use frtm::{frtm_to_gunn, GunnCoefficients};
pub use geometry::{
    connected_components, generate_geometry, GeometryConfig, Masks, MIN_GRID_EXTENT,
};
pub use noise::{add_noise, noise_sigma, NoiseRealization};
pub use tacs::{generate_factor_tacs, ArterialInput, UptakeParams};

use crate::error::Result;

/// Hard proportions `[gray, white, blood]` from the class masks.
pub(crate) fn proportions_from_masks_hard(masks: &Masks) -> Result<ndarray::Array2<f64>> {
    crate::solver::proportions_from_masks(&masks.classes())
}
