//! Reference-tissue basis pursuit: each voxel TAC is fitted as the
//! reference TAC plus a sparse nonnegative combination of the reference
//! convolved with exponentials on a fixed logarithmic rate grid.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::lambda_max_psd;
use crate::model::{exp_basis, AcquisitionTimeline, ConvOperator, Interval};
use crate::par;

/// Safety margin on the power-iteration estimate of `||D^T D||`.
const STEP_MARGIN: f64 = 1.0 + 1e-3;

/// Exponential rates plus the convolved design matrix for one reference TAC.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisGrid {
    pub rates: Vec<f64>,
    pub includes_offset: bool,
    /// L x (n_basis + offset); the offset column (the reference itself)
    /// comes first when present.
    pub design: Array2<f64>,
}

impl BasisGrid {
    pub fn n_columns(&self) -> usize {
        self.design.ncols()
    }

    fn offset(&self) -> usize {
        usize::from(self.includes_offset)
    }

    /// `b_0 + sum_j b_j / rate_j` for a coefficient vector laid out like
    /// the design matrix.
    pub fn binding_potential(&self, coeffs: &[f64]) -> f64 {
        let off = self.offset();
        let b0 = if self.includes_offset { coeffs[0] } else { 0.0 };
        b0 + self
            .rates
            .iter()
            .zip(&coeffs[off..])
            .map(|(r, b)| b / r)
            .sum::<f64>()
    }

    pub fn delivery_ratio(&self, coeffs: &[f64]) -> f64 {
        1.0 + if self.includes_offset { coeffs[0] } else { 0.0 }
    }
}

/// Geometric rate grid `rate_min (rate_max/rate_min)^(j/(n-1))`.
pub fn log_spaced_rates(rate_min: f64, rate_max: f64, n_basis: usize) -> Result<Vec<f64>> {
    if !(rate_min > 0.0 && rate_max > rate_min && rate_max.is_finite()) {
        return Err(Error::Config(format!(
            "rate grid needs 0 < rate_min < rate_max, got [{rate_min}, {rate_max}]"
        )));
    }
    if n_basis == 0 {
        return Err(Error::Config(
            "rate grid needs at least one basis function".into(),
        ));
    }
    if n_basis == 1 {
        return Ok(vec![rate_min]);
    }
    let ratio = rate_max / rate_min;
    let mut rates: Vec<f64> = (0..n_basis)
        .map(|j| rate_min * ratio.powf(j as f64 / (n_basis - 1) as f64))
        .collect();
    rates[n_basis - 1] = rate_max;
    Ok(rates)
}

pub fn make_basis(
    rate_min: f64,
    rate_max: f64,
    n_basis: usize,
    includes_offset: bool,
    m_ref: &[f64],
    timeline: &AcquisitionTimeline,
) -> Result<BasisGrid> {
    if m_ref.len() != timeline.len() {
        return Err(Error::dim("reference TAC", timeline.len(), m_ref.len()));
    }
    if m_ref.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("reference TAC must be finite".into()));
    }
    let rates = log_spaced_rates(rate_min, rate_max, n_basis)?;
    let l = m_ref.len();
    let off = usize::from(includes_offset);
    let mut design = Array2::zeros((l, n_basis + off));
    if includes_offset {
        design.column_mut(0).assign(&ArrayView1::from(m_ref));
    }
    for (j, &rate) in rates.iter().enumerate() {
        let col = ConvOperator::new(exp_basis(rate, timeline)?)?.apply(m_ref)?;
        design.column_mut(j + off).assign(&Array1::from(col));
    }
    Ok(BasisGrid {
        rates,
        includes_offset,
        design,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepictSolver {
    /// Plain proximal gradient with a fixed step; objective is monotone.
    ProximalGradient,
    /// Accelerated proximal gradient with function-value restart.
    Accelerated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepictConfig {
    pub rate_min: f64,
    pub rate_max: f64,
    pub n_basis: usize,
    pub includes_offset: bool,
    pub offset_bounds: Interval,
    /// Lower bound on the exponential coefficients.
    pub coeff_min: f64,
    /// Upper bound on the exponential coefficients; unbounded when absent.
    pub coeff_max: Option<f64>,
    /// Sparsity weight relative to `||D^T x||_inf` of each voxel.
    pub lambda_scale: f64,
    pub tolerance: f64,
    pub max_iters: usize,
    pub solver: DepictSolver,
}

impl Default for DepictConfig {
    fn default() -> Self {
        Self {
            rate_min: 0.03,
            rate_max: 6.0,
            n_basis: 30,
            includes_offset: true,
            offset_bounds: Interval::new(0.0, 0.7),
            coeff_min: 0.0,
            coeff_max: None,
            lambda_scale: 1e-4,
            tolerance: 1e-8,
            max_iters: 5000,
            solver: DepictSolver::ProximalGradient,
        }
    }
}

impl DepictConfig {
    pub fn validate(&self) -> Result<()> {
        log_spaced_rates(self.rate_min, self.rate_max, self.n_basis)?;
        let ob = self.offset_bounds;
        if !(ob.lo <= ob.hi) {
            return Err(Error::Config(format!(
                "empty offset bounds [{}, {}]",
                ob.lo, ob.hi
            )));
        }
        if let Some(hi) = self.coeff_max {
            if !(hi >= self.coeff_min) {
                return Err(Error::Config(format!(
                    "empty coefficient bounds [{}, {hi}]",
                    self.coeff_min
                )));
            }
        }
        if !(self.lambda_scale >= 0.0 && self.lambda_scale.is_finite()) {
            return Err(Error::Config("lambda_scale must be finite and >= 0".into()));
        }
        if !(self.tolerance >= 0.0) || self.max_iters == 0 {
            return Err(Error::Config(
                "tolerance must be >= 0 and max_iters > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn basis(&self, m_ref: &[f64], timeline: &AcquisitionTimeline) -> Result<BasisGrid> {
        self.validate()?;
        make_basis(
            self.rate_min,
            self.rate_max,
            self.n_basis,
            self.includes_offset,
            m_ref,
            timeline,
        )
    }

    fn bounds(&self, grid: &BasisGrid) -> Vec<Interval> {
        let coeff = Interval::new(self.coeff_min, self.coeff_max.unwrap_or(f64::INFINITY));
        let mut out = vec![coeff; grid.n_columns()];
        if grid.includes_offset {
            out[0] = self.offset_bounds;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepictFit {
    /// Offset coefficient first (when present), then one per rate.
    pub coeffs: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Design-dependent quantities shared by every voxel.
#[derive(Debug, Clone)]
pub struct DepictFitter {
    grid: BasisGrid,
    gram: Array2<f64>,
    step: f64,
    bounds: Vec<Interval>,
    /// Whether each column carries the l1 penalty (the offset does not).
    penalized: Vec<bool>,
    cfg: DepictConfig,
}

impl DepictFitter {
    pub fn new(grid: BasisGrid, cfg: &DepictConfig) -> Result<Self> {
        cfg.validate()?;
        let gram = grid.design.t().dot(&grid.design);
        let lip = lambda_max_psd(gram.view()) * STEP_MARGIN;
        let step = if lip > 0.0 { 1.0 / lip } else { 0.0 };
        let bounds = cfg.bounds(&grid);
        let mut penalized = vec![true; grid.n_columns()];
        if grid.includes_offset {
            penalized[0] = false;
        }
        Ok(Self {
            grid,
            gram,
            step,
            bounds,
            penalized,
            cfg: cfg.clone(),
        })
    }

    pub fn grid(&self) -> &BasisGrid {
        &self.grid
    }

    /// Default sparsity weight for a voxel TAC.
    pub fn default_lambda(&self, x: ArrayView1<f64>) -> f64 {
        let dx = self.grid.design.t().dot(&x);
        self.cfg.lambda_scale * dx.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Fits `x` (length L) with the configured sparsity weight.
    pub fn fit(&self, x: ArrayView1<f64>) -> Result<DepictFit> {
        let lambda = self.default_lambda(x);
        self.fit_with_lambda(x, lambda)
    }

    /// Minimizes `1/2 ||x - m_ref - D b||^2 + lambda sum_{j>=1} |b_j|`
    /// over the coefficient box.
    pub fn fit_with_lambda(&self, x: ArrayView1<f64>, lambda: f64) -> Result<DepictFit> {
        let d = &self.grid.design;
        if x.len() != d.nrows() {
            return Err(Error::dim("voxel TAC", d.nrows(), x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) || !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Domain(
                "non-finite voxel TAC or sparsity weight".into(),
            ));
        }
        // target is x minus the reference (offset column with unit weight)
        let y: Array1<f64> = if self.grid.includes_offset {
            &x - &d.column(0)
        } else {
            x.to_owned()
        };
        let c = d.t().dot(&y);
        let yy = y.dot(&y);
        match self.cfg.solver {
            DepictSolver::ProximalGradient => Ok(self.ista(&c, yy, lambda)),
            DepictSolver::Accelerated => Ok(self.fista(&c, yy, lambda)),
        }
    }

    fn objective(&self, b: &[f64], hb: &[f64], c: &Array1<f64>, yy: f64, lambda: f64) -> f64 {
        let mut quad = 0.0;
        let mut lin = 0.0;
        let mut l1 = 0.0;
        for j in 0..b.len() {
            quad += b[j] * hb[j];
            lin += c[j] * b[j];
            if self.penalized[j] {
                l1 += b[j].abs();
            }
        }
        (0.5 * yy - lin + 0.5 * quad).max(0.0) + lambda * l1
    }

    fn gram_times(&self, b: &[f64], out: &mut [f64]) {
        gemv(self.gram.view(), b, out);
    }

    fn prox_step(&self, from: &[f64], grad: &[f64], lambda: f64, out: &mut [f64]) {
        let t = self.step;
        for j in 0..out.len() {
            let v = from[j] - t * grad[j];
            let z = if self.penalized[j] {
                soft(v, t * lambda)
            } else {
                v
            };
            out[j] = self.bounds[j].clamp(z);
        }
    }

    fn ista(&self, c: &Array1<f64>, yy: f64, lambda: f64) -> DepictFit {
        let p = c.len();
        let mut b: Vec<f64> = self.bounds.iter().map(|iv| iv.clamp(0.0)).collect();
        let mut hb = vec![0.0; p];
        let mut grad = vec![0.0; p];
        let mut next = vec![0.0; p];
        self.gram_times(&b, &mut hb);
        let mut obj = self.objective(&b, &hb, c, yy, lambda);
        let mut iterations = 0;
        let mut converged = false;
        if self.step == 0.0 {
            return DepictFit {
                coeffs: b,
                objective: obj,
                iterations,
                converged: true,
            };
        }
        while iterations < self.cfg.max_iters {
            iterations += 1;
            for j in 0..p {
                grad[j] = hb[j] - c[j];
            }
            self.prox_step(&b, &grad, lambda, &mut next);
            std::mem::swap(&mut b, &mut next);
            self.gram_times(&b, &mut hb);
            let new_obj = self.objective(&b, &hb, c, yy, lambda);
            let change = (obj - new_obj).abs();
            obj = new_obj;
            if change <= self.cfg.tolerance * obj.abs() || obj == 0.0 {
                converged = true;
                break;
            }
        }
        DepictFit {
            coeffs: b,
            objective: obj,
            iterations,
            converged,
        }
    }

    fn fista(&self, c: &Array1<f64>, yy: f64, lambda: f64) -> DepictFit {
        let p = c.len();
        let mut b: Vec<f64> = self.bounds.iter().map(|iv| iv.clamp(0.0)).collect();
        let mut z = b.clone();
        let mut hb = vec![0.0; p];
        let mut hz = vec![0.0; p];
        let mut grad = vec![0.0; p];
        let mut next = vec![0.0; p];
        self.gram_times(&b, &mut hb);
        let mut obj = self.objective(&b, &hb, c, yy, lambda);
        let mut theta = 1.0f64;
        let mut iterations = 0;
        let mut converged = false;
        if self.step == 0.0 {
            return DepictFit {
                coeffs: b,
                objective: obj,
                iterations,
                converged: true,
            };
        }
        while iterations < self.cfg.max_iters {
            iterations += 1;
            self.gram_times(&z, &mut hz);
            for j in 0..p {
                grad[j] = hz[j] - c[j];
            }
            self.prox_step(&z, &grad, lambda, &mut next);
            self.gram_times(&next, &mut hz);
            let new_obj = self.objective(&next, &hz, c, yy, lambda);
            if new_obj > obj {
                // restart from the last accepted point
                theta = 1.0;
                z.copy_from_slice(&b);
                continue;
            }
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let mom = (theta - 1.0) / theta_next;
            for j in 0..p {
                z[j] = next[j] + mom * (next[j] - b[j]);
            }
            theta = theta_next;
            std::mem::swap(&mut b, &mut next);
            let change = obj - new_obj;
            obj = new_obj;
            if change <= self.cfg.tolerance * obj.abs() || obj == 0.0 {
                converged = true;
                break;
            }
        }
        DepictFit {
            coeffs: b,
            objective: obj,
            iterations,
            converged,
        }
    }
}

#[inline]
fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn gemv(a: ArrayView2<f64>, x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(a.rows()) {
        let mut acc = 0.0;
        for (r, v) in row.iter().zip(x) {
            acc += r * v;
        }
        *o = acc;
    }
}

/// Voxelwise maps from a whole-image fit.
#[derive(Debug, Clone, PartialEq)]
pub struct DepictMaps {
    pub bp: Vec<f64>,
    pub r1: Vec<f64>,
    /// Voxels whose fit failed (reported as NaN in both maps).
    pub failures: usize,
    /// Voxels that hit the iteration cap.
    pub not_converged: usize,
}

/// Fits every column of `data` (L x N) independently against `m_ref`.
pub fn depict_bp_map(
    data: ArrayView2<f64>,
    m_ref: &[f64],
    timeline: &AcquisitionTimeline,
    cfg: &DepictConfig,
) -> Result<DepictMaps> {
    if data.nrows() != timeline.len() {
        return Err(Error::dim("image frames", timeline.len(), data.nrows()));
    }
    let fitter = DepictFitter::new(cfg.basis(m_ref, timeline)?, cfg)?;
    let fits = par::map_indices(data.ncols(), |n| fitter.fit(data.column(n)).ok());
    let mut maps = DepictMaps {
        bp: Vec::with_capacity(fits.len()),
        r1: Vec::with_capacity(fits.len()),
        failures: 0,
        not_converged: 0,
    };
    for fit in fits {
        match fit {
            Some(f) => {
                maps.bp.push(fitter.grid.binding_potential(&f.coeffs));
                maps.r1.push(fitter.grid.delivery_ratio(&f.coeffs));
                maps.not_converged += usize::from(!f.converged);
            }
            None => {
                maps.bp.push(f64::NAN);
                maps.r1.push(f64::NAN);
                maps.failures += 1;
            }
        }
    }
    if maps.failures > 0 {
        log::warn!("{} voxel fits failed", maps.failures);
    }
    Ok(maps)
}
