use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Zip};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{lambda_max_psd, lambda_max_sym_fixed, lambda_max_sym_small};
use crate::model::{
    build_all_q, check_nonneg, check_simplex_columns, exp_basis_moment, residual_with_q,
    stacked_basis, AcquisitionTimeline, ConvOperator, DynamicImage, FactorModel, GridDims,
    KernelSet, KineticNonlinearity, FEAS_TOL,
};
use crate::par;
use crate::solver::{SolverConfig, SpatialOperator};

/// The unknowns of the PNMM problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Variables {
    /// Factor TACs, L x K, blood last.
    pub m: Array2<f64>,
    /// Factor proportions, K x N.
    pub a: Array2<f64>,
    /// Coefficient matrices `B_0..B_V`, (K-1) x N each.
    pub b: Vec<Array2<f64>>,
    /// Rates, (K-1) x V.
    pub alpha: Array2<f64>,
}

impl Variables {
    pub fn new(model: FactorModel, kin: KineticNonlinearity) -> Self {
        Self {
            m: model.m,
            a: model.a,
            b: kin.b,
            alpha: kin.alpha,
        }
    }

    pub fn n_factors(&self) -> usize {
        self.m.ncols()
    }

    pub fn n_tissues(&self) -> usize {
        self.m.ncols() - 1
    }

    pub fn n_rates(&self) -> usize {
        self.alpha.ncols()
    }

    pub fn a_tissue(&self) -> ArrayView2<'_, f64> {
        self.a.slice(s![..self.n_tissues(), ..])
    }

    pub fn m_tissue(&self) -> ArrayView2<'_, f64> {
        self.m.slice(s![.., ..self.n_tissues()])
    }

    pub fn factor_model(&self) -> Result<FactorModel> {
        FactorModel::new(self.m.clone(), self.a.clone())
    }

    pub fn kinetics(&self, cfg: &SolverConfig) -> Result<KineticNonlinearity> {
        KineticNonlinearity::new(self.b.clone(), self.alpha.clone(), cfg.bounds.clone())
    }
}

/// Objective value split by term. Penalties are already weighted.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ObjectiveTerms {
    pub data: f64,
    pub smoothness: f64,
    pub anchor: f64,
    pub sparsity: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.data + self.smoothness + self.anchor + self.sparsity
    }
}

/// Quantities derived from the current variables: kernels, `Q_i` and the
/// residual `Y - X`.
#[derive(Debug, Clone)]
pub(crate) struct Cache {
    pub kernels: KernelSet,
    pub qs: Vec<Array2<f64>>,
    pub residual: Array2<f64>,
}

/// Data, anchor and configuration of one PNMM problem.
#[derive(Debug, Clone)]
pub struct PnmmProblem {
    y: Array2<f64>,
    timeline: AcquisitionTimeline,
    spatial: SpatialOperator,
    m_anchor: Array2<f64>,
    cfg: SolverConfig,
}

impl PnmmProblem {
    /// `m_anchor` is the factor estimate that the anchor penalty pulls
    /// towards (normally the initialization).
    pub fn new(
        y: Array2<f64>,
        dims: GridDims,
        timeline: AcquisitionTimeline,
        m_anchor: Array2<f64>,
        cfg: SolverConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if y.nrows() != timeline.len() {
            return Err(Error::dim("data frames", timeline.len(), y.nrows()));
        }
        if y.ncols() != dims.n_voxels() {
            return Err(Error::dim("data voxels", dims.n_voxels(), y.ncols()));
        }
        if m_anchor.nrows() != timeline.len() || m_anchor.ncols() < 2 {
            return Err(Error::dim(
                "anchor factor shape",
                format!("({}, >=2)", timeline.len()),
                format!("{:?}", m_anchor.dim()),
            ));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("data contains non-finite values".into()));
        }
        Ok(Self {
            y,
            timeline,
            spatial: SpatialOperator::new(dims),
            m_anchor,
            cfg,
        })
    }

    pub fn from_image(
        image: &DynamicImage,
        m_anchor: Array2<f64>,
        cfg: SolverConfig,
    ) -> Result<Self> {
        Self::new(
            image.data.clone(),
            image.dims,
            image.timeline.clone(),
            m_anchor,
            cfg,
        )
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.y.view()
    }

    pub fn timeline(&self) -> &AcquisitionTimeline {
        &self.timeline
    }

    pub fn spatial(&self) -> &SpatialOperator {
        &self.spatial
    }

    pub fn m_anchor(&self) -> ArrayView2<'_, f64> {
        self.m_anchor.view()
    }

    /// Shape and constraint check; everything the objective assumes.
    pub fn check(&self, v: &Variables) -> Result<()> {
        let (l, n) = self.y.dim();
        let k = self.m_anchor.ncols();
        let kt = k - 1;
        let nv = self.cfg.bounds.n_rates();
        if v.m.dim() != (l, k) {
            return Err(Error::dim(
                "factor matrix",
                format!("{:?}", (l, k)),
                format!("{:?}", v.m.dim()),
            ));
        }
        if v.a.dim() != (k, n) {
            return Err(Error::dim(
                "proportion matrix",
                format!("{:?}", (k, n)),
                format!("{:?}", v.a.dim()),
            ));
        }
        if v.alpha.dim() != (kt, nv) {
            return Err(Error::dim(
                "rate matrix",
                format!("{:?}", (kt, nv)),
                format!("{:?}", v.alpha.dim()),
            ));
        }
        if v.b.len() != nv + 1 || v.b.iter().any(|b| b.dim() != (kt, n)) {
            return Err(Error::dim(
                "coefficient matrices",
                format!("{} x {:?}", nv + 1, (kt, n)),
                v.b.len(),
            ));
        }
        check_nonneg(v.m.view(), "factor TACs")?;
        check_simplex_columns(v.a.view(), FEAS_TOL)?;
        for (i, (b, iv)) in v.b.iter().zip(&self.cfg.bounds.b).enumerate() {
            if let Some(x) = b.iter().find(|x| !iv.contains(**x, FEAS_TOL)) {
                return Err(Error::Infeasible(format!(
                    "B_{i} entry {x} outside [{}, {}]",
                    iv.lo, iv.hi
                )));
            }
        }
        for (i, iv) in self.cfg.bounds.alpha.iter().enumerate() {
            if let Some(x) = v
                .alpha
                .column(i)
                .iter()
                .find(|x| !iv.contains(**x, FEAS_TOL))
            {
                return Err(Error::Infeasible(format!(
                    "alpha_{} entry {x} outside [{}, {}]",
                    i + 1,
                    iv.lo,
                    iv.hi
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn cache(&self, v: &Variables) -> Result<Cache> {
        let kernels = KernelSet::new(v.alpha.view(), &self.timeline)?;
        let qs = build_all_q(v.m_tissue(), &kernels, v.n_rates());
        let residual = self.residual_with(v, &qs);
        Ok(Cache {
            kernels,
            qs,
            residual,
        })
    }

    pub(crate) fn residual_with(&self, v: &Variables, qs: &[Array2<f64>]) -> Array2<f64> {
        residual_with_q(self.y.view(), v.m.view(), v.a.view(), &v.b, qs)
    }

    /// Objective at a feasible point. Infeasible input is an error.
    pub fn objective(&self, v: &Variables) -> Result<ObjectiveTerms> {
        self.check(v)?;
        let cache = self.cache(v)?;
        Ok(self.terms(v, &cache))
    }

    /// Objective without the feasibility check; for derivative checks
    /// at perturbed points.
    pub fn evaluate_unchecked(&self, v: &Variables) -> Result<ObjectiveTerms> {
        let cache = self.cache(v)?;
        Ok(self.terms(v, &cache))
    }

    pub(crate) fn terms(&self, v: &Variables, cache: &Cache) -> ObjectiveTerms {
        let r = &cache.residual;
        let data = 0.5
            * par::sum_chunks(r.ncols(), |range| {
                r.slice(s![.., range]).iter().map(|x| x * x).sum()
            });
        let smoothness = self.cfg.eta
            * v.a
                .rows()
                .into_iter()
                .map(|row| self.spatial.penalty(row))
                .sum::<f64>();
        let anchor = 0.5
            * self.cfg.beta
            * v.m
                .iter()
                .zip(&self.m_anchor)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        let sparsity = self.cfg.lambda * v.b.iter().map(|b| group_norm(b.view())).sum::<f64>();
        ObjectiveTerms {
            data,
            smoothness,
            anchor,
            sparsity,
        }
    }

    /// Gradient with respect to column `k` of M and its Lipschitz constant.
    pub fn grad_m(&self, v: &Variables, k: usize) -> Result<(Array1<f64>, f64)> {
        self.check(v)?;
        let cache = self.cache(v)?;
        Ok(self.grad_m_with(v, &cache, k))
    }

    pub(crate) fn grad_m_with(&self, v: &Variables, cache: &Cache, k: usize) -> (Array1<f64>, f64) {
        let r = &cache.residual;
        let l = r.nrows();
        let a_k = v.a.row(k);
        let mut g = -r.dot(&a_k);
        let mut lip = a_k.dot(&a_k);
        if k < v.n_tissues() {
            let ws: Vec<Array1<f64>> = v.b.iter().map(|b| &a_k * &b.row(k)).collect();
            for (i, w) in ws.iter().enumerate() {
                let rw = r.dot(w);
                let back = cache.kernels.apply_transpose(k, i, rw.as_slice().unwrap());
                g.iter_mut().zip(back).for_each(|(g, x)| *g -= x);
            }
            // Exact curvature: sum_n (a_kn I + sum_i w_in E_i)^T (same).
            let es: Vec<Array2<f64>> = (0..ws.len())
                .map(|i| cache.kernels.dense(k, i, l))
                .collect();
            let mut h = Array2::<f64>::eye(l) * lip;
            for i in 0..ws.len() {
                let c = a_k.dot(&ws[i]);
                if c != 0.0 {
                    h.scaled_add(c, &es[i]);
                    h.scaled_add(c, &es[i].t());
                }
                for j in 0..ws.len() {
                    let c = ws[i].dot(&ws[j]);
                    if c != 0.0 {
                        h.scaled_add(c, &es[i].t().dot(&es[j]));
                    }
                }
            }
            lip = lambda_max_psd(h.view());
        }
        let beta = self.cfg.beta;
        g.iter_mut()
            .zip(v.m.column(k))
            .zip(self.m_anchor.column(k))
            .for_each(|((g, m), m0)| *g += beta * (m - m0));
        (g, lip + beta)
    }

    /// Gradient with respect to A and its Lipschitz constant.
    pub fn grad_a(&self, v: &Variables) -> Result<(Array2<f64>, f64)> {
        self.check(v)?;
        let cache = self.cache(v)?;
        Ok(self.grad_a_with(v, &cache))
    }

    pub(crate) fn grad_a_with(&self, v: &Variables, cache: &Cache) -> (Array2<f64>, f64) {
        let k = v.n_factors();
        let kt = v.n_tissues();
        let r = &cache.residual;
        let basis = stacked_basis(v.m.view(), &cache.qs);
        let bt = basis.t();
        let mut g = par::collect_columns(k, r.ncols(), |range| {
            let proj = bt.dot(&r.slice(s![.., range.clone()]));
            let mut out = -&proj.slice(s![..k, ..]);
            let mut top = out.slice_mut(s![..kt, ..]);
            for (i, b) in v.b.iter().enumerate() {
                let qr = proj.slice(s![k + i * kt..k + (i + 1) * kt, ..]);
                Zip::from(&mut top)
                    .and(qr)
                    .and(b.slice(s![.., range.clone()]))
                    .for_each(|o, &q, &b| *o -= q * b);
            }
            out
        });
        let eta = self.cfg.eta;
        if eta != 0.0 {
            for (mut grow, arow) in g.rows_mut().into_iter().zip(v.a.rows()) {
                grow.scaled_add(eta, &self.spatial.normal(arow));
            }
        }
        let l = self.lipschitz_a(v, cache);
        (g, l)
    }

    fn lipschitz_a(&self, v: &Variables, cache: &Cache) -> f64 {
        let k = v.n_factors();
        let kt = v.n_tissues();
        let nq = cache.qs.len();
        // Columns [m_1..m_K, Q_0, .., Q_V]; per-voxel mixing matrices are
        // combinations of these, so one Gram matrix serves every voxel.
        let cols = stacked_basis(v.m.view(), &cache.qs);
        let gram = cols.t().dot(&cols);
        let n = v.a.ncols();
        let nc = gram.ncols();
        let gflat: Vec<f64> = gram.iter().copied().collect();
        let small = k <= 8;
        let per_chunk = par::map_chunks(n, par::CHUNK, |range| {
            let mut best: f64 = 0.0;
            let mut gn = Array2::<f64>::zeros((k, k));
            let mut fixed = [[0.0f64; 8]; 8];
            let mut support: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(nq + 1); k];
            for nn in range {
                for (c, sup) in support.iter_mut().enumerate() {
                    sup.clear();
                    sup.push((c, 1.0));
                    if c < kt {
                        for (i, b) in v.b.iter().enumerate() {
                            let coef = b[[c, nn]];
                            if coef != 0.0 {
                                sup.push((k + i * kt + c, coef));
                            }
                        }
                    }
                }
                for c1 in 0..k {
                    for c2 in c1..k {
                        let mut acc = 0.0;
                        for &(p, tp) in &support[c1] {
                            let row = &gflat[p * nc..(p + 1) * nc];
                            for &(q, tq) in &support[c2] {
                                acc += tp * tq * row[q];
                            }
                        }
                        if small {
                            fixed[c1][c2] = acc;
                            fixed[c2][c1] = acc;
                        } else {
                            gn[[c1, c2]] = acc;
                            gn[[c2, c1]] = acc;
                        }
                    }
                }
                let lam = if small {
                    lambda_max_sym_fixed(&mut fixed, k)
                } else {
                    lambda_max_sym_small(gn.view())
                };
                best = best.max(lam);
            }
            best
        });
        let data = per_chunk.into_iter().fold(0.0, f64::max);
        data + self.cfg.eta * self.spatial.lambda_max()
    }

    /// Gradient with respect to `B_i` and its Lipschitz constant.
    pub fn grad_b(&self, v: &Variables, i: usize) -> Result<(Array2<f64>, f64)> {
        self.check(v)?;
        let cache = self.cache(v)?;
        Ok(self.grad_b_with(v, &cache, i))
    }

    pub(crate) fn grad_b_with(&self, v: &Variables, cache: &Cache, i: usize) -> (Array2<f64>, f64) {
        let kt = v.n_tissues();
        let r = &cache.residual;
        let q = &cache.qs[i];
        let at = v.a_tissue();
        let g = par::collect_columns(kt, r.ncols(), |range| {
            let qr = q.t().dot(&r.slice(s![.., range.clone()]));
            -(qr * at.slice(s![.., range]))
        });
        let gram = q.t().dot(q);
        let gflat: Vec<f64> = gram.iter().copied().collect();
        let per_chunk = par::map_chunks(at.ncols(), par::CHUNK, |range| {
            let mut best: f64 = 0.0;
            let mut h = Array2::<f64>::zeros((kt, kt));
            let mut fixed = [[0.0f64; 8]; 8];
            let mut col = vec![0.0; kt];
            for nn in range {
                for (p, c) in col.iter_mut().enumerate() {
                    *c = at[[p, nn]];
                }
                let lam = if kt <= 8 {
                    for p in 0..kt {
                        for s in 0..kt {
                            fixed[p][s] = col[p] * gflat[p * kt + s] * col[s];
                        }
                    }
                    lambda_max_sym_fixed(&mut fixed, kt)
                } else {
                    for p in 0..kt {
                        for s in 0..kt {
                            h[[p, s]] = col[p] * gflat[p * kt + s] * col[s];
                        }
                    }
                    lambda_max_sym_small(h.view())
                };
                best = best.max(lam);
            }
            best
        });
        (g, per_chunk.into_iter().fold(0.0, f64::max))
    }

    /// Derivative with respect to `alpha[k, i-1]` (`i >= 1`) and a
    /// Lipschitz constant of that derivative valid over the whole box.
    pub fn grad_alpha(&self, v: &Variables, k: usize, i: usize) -> Result<(f64, f64)> {
        self.check(v)?;
        let cache = self.cache(v)?;
        Ok(self.grad_alpha_with(v, &cache, k, i))
    }

    pub(crate) fn grad_alpha_with(
        &self,
        v: &Variables,
        cache: &Cache,
        k: usize,
        i: usize,
    ) -> (f64, f64) {
        assert!(i >= 1, "rate index starts at 1");
        let r = &cache.residual;
        let w = &v.a.row(k) * &v.b[i].row(k);
        let rw = r.dot(&w);
        let m_k = v.m.column(k).to_vec();
        let rate = v.alpha[[k, i - 1]];
        // d/dalpha E m = -T(t e^{-alpha t}) m, and d/dalpha J = -<dX/dalpha, R>.
        let f1 = moment_conv(rate, 1, &self.timeline, &m_k);
        let g = dot(&f1, rw.as_slice().unwrap());

        // Entries of T(t^p e^{-a t}) m are nonincreasing in a for m >= 0,
        // so their norms over the box peak at the lower bound.
        let lo = self.cfg.bounds.alpha[i - 1].lo;
        let f0 = moment_conv(lo, 0, &self.timeline, &m_k);
        let d1 = moment_conv(lo, 1, &self.timeline, &m_k);
        let d2 = moment_conv(lo, 2, &self.timeline, &m_k);
        let ww = w.dot(&w);
        let f_cur = cache.kernels.apply(k, i, &m_k);
        let u0: Vec<f64> = rw.iter().zip(&f_cur).map(|(a, f)| a + f * ww).collect();
        let lip = norm(&u0) * norm(&d2) + ww * (dot(&d1, &d1) + norm(&f0) * norm(&d2));
        (g, lip)
    }
}

fn moment_conv(rate: f64, power: i32, timeline: &AcquisitionTimeline, m: &[f64]) -> Vec<f64> {
    let op =
        ConvOperator::new(exp_basis_moment(rate, power, timeline)).expect("non-empty timeline");
    op.apply(m).expect("matching length")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `sum_n ||b_n||_2` over the columns.
pub fn group_norm(b: ArrayView2<f64>) -> f64 {
    b.columns()
        .into_iter()
        .map(|c: ArrayView1<f64>| c.dot(&c).sqrt())
        .sum()
}
