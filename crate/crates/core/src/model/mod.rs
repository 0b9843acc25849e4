//! PNMM forward model: frame timing, exponential convolution kernels, the
//! factor/nonlinearity parameter types, image prediction and derived
//! kinetic maps.

mod conv;
mod forward;
mod timeline;
mod types;

pub use conv::{conv_operator, exp_basis, exp_basis_moment, ConvOperator};
pub use forward::{
    binding_potential_map, build_all_q, build_q, delivery_ratio_map, reconstruct,
    reconstruct_with_q, KernelSet,
};
pub(crate) use forward::{residual_with_q, stacked_basis};
pub use timeline::AcquisitionTimeline;
pub(crate) use types::{check_nonneg, check_simplex_columns};
pub use types::{
    DynamicImage, FactorModel, GridDims, Interval, KineticBounds, KineticNonlinearity,
    F18_DECAY_PER_MIN, FEAS_TOL,
};
