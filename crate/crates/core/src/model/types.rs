use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AcquisitionTimeline;

/// Tolerance used when checking simplex and box membership.
pub const FEAS_TOL: f64 = 1e-9;

/// 3-D voxel lattice; voxel index is `x + nx * (y + ny * z)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl GridDims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    pub fn n_voxels(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn coords(&self, n: usize) -> (usize, usize, usize) {
        let x = n % self.nx;
        let y = (n / self.nx) % self.ny;
        let z = n / (self.nx * self.ny);
        (x, y, z)
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }
}

/// L frames by N voxels of activity concentration on a 3-D lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicImage {
    pub data: Array2<f64>,
    pub dims: GridDims,
    pub voxel_size_mm: [f64; 3],
    pub timeline: AcquisitionTimeline,
}

impl DynamicImage {
    pub fn new(
        data: Array2<f64>,
        dims: GridDims,
        voxel_size_mm: [f64; 3],
        timeline: AcquisitionTimeline,
    ) -> Result<Self> {
        if data.ncols() != dims.n_voxels() {
            return Err(Error::dim("image voxels", dims.n_voxels(), data.ncols()));
        }
        if data.nrows() != timeline.len() {
            return Err(Error::dim("image frames", timeline.len(), data.nrows()));
        }
        if voxel_size_mm.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Domain("voxel size must be positive".into()));
        }
        Ok(Self {
            data,
            dims,
            voxel_size_mm,
            timeline,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_voxels(&self) -> usize {
        self.data.ncols()
    }
}

/// Factor TACs `m` (L x K, blood last) and factor proportions `a` (K x N).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub m: Array2<f64>,
    pub a: Array2<f64>,
}

impl FactorModel {
    pub fn new(m: Array2<f64>, a: Array2<f64>) -> Result<Self> {
        let fm = Self { m, a };
        fm.validate()?;
        Ok(fm)
    }

    pub fn n_factors(&self) -> usize {
        self.m.ncols()
    }

    pub fn n_tissues(&self) -> usize {
        self.m.ncols() - 1
    }

    /// Tissue factors only (all columns but blood).
    pub fn m_tissue(&self) -> ArrayView2<'_, f64> {
        self.m.slice(ndarray::s![.., ..self.n_tissues()])
    }

    pub fn a_tissue(&self) -> ArrayView2<'_, f64> {
        self.a.slice(ndarray::s![..self.n_tissues(), ..])
    }

    pub fn validate(&self) -> Result<()> {
        if self.m.ncols() < 2 {
            return Err(Error::Domain(
                "need at least one tissue factor plus blood (K >= 2)".into(),
            ));
        }
        if self.a.nrows() != self.m.ncols() {
            return Err(Error::dim(
                "proportion rows",
                self.m.ncols(),
                self.a.nrows(),
            ));
        }
        check_nonneg(self.m.view(), "factor TACs")?;
        check_simplex_columns(self.a.view(), FEAS_TOL)
    }
}

pub(crate) fn check_nonneg(m: ArrayView2<f64>, what: &str) -> Result<()> {
    if let Some(v) = m.iter().find(|v| !(v.is_finite() && **v >= -FEAS_TOL)) {
        return Err(Error::Infeasible(format!("{what} must be >= 0, found {v}")));
    }
    Ok(())
}

pub(crate) fn check_simplex_columns(a: ArrayView2<f64>, tol: f64) -> Result<()> {
    for (n, col) in a.columns().into_iter().enumerate() {
        let mut sum = 0.0;
        for &v in col {
            if !(v.is_finite() && v >= -tol) {
                return Err(Error::Infeasible(format!(
                    "proportion column {n} has negative entry {v}"
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > tol {
            return Err(Error::Infeasible(format!(
                "proportion column {n} sums to {sum}"
            )));
        }
    }
    Ok(())
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    #[inline]
    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.lo).min(self.hi)
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }
}

/// Box constraints on the nonlinearity coefficients and exponential rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticBounds {
    /// One interval per coefficient matrix `B_0..B_V`.
    pub b: Vec<Interval>,
    /// One interval per rate index `1..V`.
    pub alpha: Vec<Interval>,
}

/// 18F decay constant in min^-1, the default lower bound on rates.
pub const F18_DECAY_PER_MIN: f64 = 0.0063;

impl Default for KineticBounds {
    /// Synthetic-study bounds: b_0 in [0, 0.7], b_1 in [-0.2, 0],
    /// b_2 in [0, 0.15], rates in [0.0063, 6] min^-1.
    fn default() -> Self {
        Self {
            b: vec![
                Interval::new(0.0, 0.7),
                Interval::new(-0.2, 0.0),
                Interval::new(0.0, 0.15),
            ],
            alpha: vec![Interval::new(F18_DECAY_PER_MIN, 6.0); 2],
        }
    }
}

impl KineticBounds {
    /// Same box `[lo, hi]` for every coefficient matrix.
    pub fn uniform_b(v: usize, lo: f64, hi: f64, alpha: Interval) -> Self {
        Self {
            b: vec![Interval::new(lo, hi); v + 1],
            alpha: vec![alpha; v],
        }
    }

    pub fn n_rates(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.alpha.len();
        if !(1..=4).contains(&v) {
            return Err(Error::Config(format!(
                "number of exponential bases must be in 1..=4, got {v}"
            )));
        }
        if self.b.len() != v + 1 {
            return Err(Error::Config(format!(
                "expected {} coefficient bounds, got {}",
                v + 1,
                self.b.len()
            )));
        }
        for (i, iv) in self.b.iter().enumerate() {
            if !(iv.lo <= 0.0 && iv.hi >= 0.0 && iv.lo.is_finite() && iv.hi.is_finite()) {
                return Err(Error::Config(format!(
                    "coefficient bounds for B_{i} must contain 0: [{}, {}]",
                    iv.lo, iv.hi
                )));
            }
        }
        for (i, iv) in self.alpha.iter().enumerate() {
            if !(iv.lo > 0.0 && iv.hi >= iv.lo && iv.hi.is_finite()) {
                return Err(Error::Config(format!(
                    "rate bounds for alpha_{} must satisfy 0 < lo <= hi: [{}, {}]",
                    i + 1,
                    iv.lo,
                    iv.hi
                )));
            }
        }
        Ok(())
    }
}

/// Nonlinearity coefficients `B_0..B_V` ((K-1) x N each) and rates
/// `alpha` ((K-1) x V). The implicit rate of `B_0` is zero (identity kernel).
#[derive(Debug, Clone, PartialEq)]
pub struct KineticNonlinearity {
    pub b: Vec<Array2<f64>>,
    pub alpha: Array2<f64>,
    pub bounds: KineticBounds,
}

impl KineticNonlinearity {
    pub fn new(b: Vec<Array2<f64>>, alpha: Array2<f64>, bounds: KineticBounds) -> Result<Self> {
        let kin = Self { b, alpha, bounds };
        kin.validate_shapes()?;
        kin.validate_bounds()?;
        Ok(kin)
    }

    /// All coefficients zero, rates given.
    pub fn zeros(
        n_tissues: usize,
        n_voxels: usize,
        alpha: Array2<f64>,
        bounds: KineticBounds,
    ) -> Result<Self> {
        let v = alpha.ncols();
        Self::new(
            vec![Array2::zeros((n_tissues, n_voxels)); v + 1],
            alpha,
            bounds,
        )
    }

    pub fn n_rates(&self) -> usize {
        self.alpha.ncols()
    }

    pub fn validate_shapes(&self) -> Result<()> {
        let v = self.alpha.ncols();
        if self.b.len() != v + 1 {
            return Err(Error::dim("coefficient matrices", v + 1, self.b.len()));
        }
        let shape = self.b[0].dim();
        if self.b.iter().any(|b| b.dim() != shape) {
            return Err(Error::dim(
                "coefficient matrix shape",
                format!("{shape:?}"),
                "mixed shapes",
            ));
        }
        if shape.0 != self.alpha.nrows() {
            return Err(Error::dim("rate rows", shape.0, self.alpha.nrows()));
        }
        if self.bounds.b.len() != v + 1 || self.bounds.alpha.len() != v {
            return Err(Error::dim(
                "bounds",
                format!("{} / {}", v + 1, v),
                format!("{} / {}", self.bounds.b.len(), self.bounds.alpha.len()),
            ));
        }
        Ok(())
    }

    pub fn validate_bounds(&self) -> Result<()> {
        for (i, (b, iv)) in self.b.iter().zip(&self.bounds.b).enumerate() {
            if let Some(v) = b.iter().find(|v| !iv.contains(**v, FEAS_TOL)) {
                return Err(Error::Infeasible(format!(
                    "B_{i} entry {v} outside [{}, {}]",
                    iv.lo, iv.hi
                )));
            }
        }
        for (i, iv) in self.bounds.alpha.iter().enumerate() {
            if let Some(v) = self
                .alpha
                .column(i)
                .iter()
                .find(|v| !iv.contains(**v, FEAS_TOL))
            {
                return Err(Error::Infeasible(format!(
                    "alpha_{} entry {v} outside [{}, {}]",
                    i + 1,
                    iv.lo,
                    iv.hi
                )));
            }
        }
        Ok(())
    }
}
