use std::io::Write;

use ndarray::{Array1, Array2, Axis, Zip};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{exp_basis, ConvOperator};
use crate::solver::problem::{Cache, ObjectiveTerms, PnmmProblem, Variables};
use crate::solver::projections::{project_simplex_columns_inplace, prox_column};

/// Lipschitz constants used by the most recent update of each block.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct LipschitzLog {
    pub m: Vec<f64>,
    pub a: f64,
    pub b: Vec<f64>,
    pub alpha: Vec<Vec<f64>>,
}

/// Why the outer loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopReason {
    Converged,
    MaxIterations,
    NothingToUpdate,
}

/// One row of the objective trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub terms: ObjectiveTerms,
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub vars: Variables,
    /// Row 0 is the starting point; row `t` follows outer iteration `t`.
    pub history: Vec<TraceRow>,
    pub iterations: usize,
    pub lipschitz: LipschitzLog,
    pub stop: StopReason,
}

impl SolverState {
    pub fn final_objective(&self) -> f64 {
        self.history
            .last()
            .map(|r| r.terms.total())
            .unwrap_or(f64::NAN)
    }

    /// Objective trace as CSV.
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,objective,data,smoothness,anchor,sparsity")?;
        for row in &self.history {
            let t = row.terms;
            writeln!(
                w,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                row.iteration,
                t.total(),
                t.data,
                t.smoothness,
                t.anchor,
                t.sparsity
            )?;
        }
        Ok(())
    }
}

/// Iterate plus cached derived quantities; exposes the individual block
/// updates of the alternating scheme.
pub struct PalmWorkspace<'p> {
    problem: &'p PnmmProblem,
    vars: Variables,
    cache: Cache,
    lipschitz: LipschitzLog,
}

impl<'p> PalmWorkspace<'p> {
    pub fn new(problem: &'p PnmmProblem, vars: Variables) -> Result<Self> {
        problem.check(&vars)?;
        let cache = problem.cache(&vars)?;
        let kt = vars.n_tissues();
        let v = vars.n_rates();
        let lipschitz = LipschitzLog {
            m: vec![0.0; vars.n_factors()],
            a: 0.0,
            b: vec![0.0; v + 1],
            alpha: vec![vec![0.0; v]; kt],
        };
        Ok(Self {
            problem,
            vars,
            cache,
            lipschitz,
        })
    }

    pub fn vars(&self) -> &Variables {
        &self.vars
    }

    pub fn into_vars(self) -> Variables {
        self.vars
    }

    pub fn lipschitz(&self) -> &LipschitzLog {
        &self.lipschitz
    }

    pub fn terms(&self) -> ObjectiveTerms {
        self.problem.terms(&self.vars, &self.cache)
    }

    fn step(&self, lip: f64) -> Option<f64> {
        (lip > 0.0 && lip.is_finite()).then(|| self.problem.config().gamma / lip)
    }

    fn refresh_residual(&mut self) {
        self.cache.residual = self.problem.residual_with(&self.vars, &self.cache.qs);
    }

    fn refresh_q_column(&mut self, k: usize) {
        let m_k = self.vars.m.column(k).to_vec();
        for (i, q) in self.cache.qs.iter_mut().enumerate() {
            let col = self.cache.kernels.apply(k, i, &m_k);
            q.column_mut(k).assign(&Array1::from(col));
        }
    }

    /// Projected gradient step on factor column `k`.
    pub fn update_m(&mut self, k: usize) {
        let (g, lip) = self.problem.grad_m_with(&self.vars, &self.cache, k);
        self.lipschitz.m[k] = lip;
        let Some(step) = self.step(lip) else { return };
        let mut col = self.vars.m.column_mut(k);
        Zip::from(&mut col)
            .and(&g)
            .for_each(|m, g| *m = (*m - step * g).max(0.0));
        if k < self.vars.n_tissues() {
            self.refresh_q_column(k);
        }
        self.refresh_residual();
    }

    /// Projected gradient step on the proportions (simplex per voxel).
    pub fn update_a(&mut self) {
        let (g, lip) = self.problem.grad_a_with(&self.vars, &self.cache);
        self.lipschitz.a = lip;
        let Some(step) = self.step(lip) else { return };
        self.vars.a.scaled_add(-step, &g);
        project_simplex_columns_inplace(&mut self.vars.a);
        self.refresh_residual();
    }

    /// Proximal step on `B_i`: group shrinkage, box clamp, and a per-voxel
    /// guard that keeps the old column when the candidate does not lower
    /// the local majorizer (the composition is not the exact prox when
    /// several tissues hit the box).
    pub fn update_b(&mut self, i: usize) {
        let (g, lip) = self.problem.grad_b_with(&self.vars, &self.cache, i);
        self.lipschitz.b[i] = lip;
        let Some(step) = self.step(lip) else { return };
        let lambda = self.problem.config().lambda;
        let bounds = self.problem.config().bounds.b[i];
        let thr = lambda * step;
        let b = &mut self.vars.b[i];
        let kt = b.nrows();
        let mut cand = Array1::zeros(kt);
        for (mut col, gcol) in b.axis_iter_mut(Axis(1)).zip(g.axis_iter(Axis(1))) {
            let mut old_sq = 0.0;
            for p in 0..kt {
                cand[p] = col[p] - step * gcol[p];
                old_sq += col[p] * col[p];
            }
            prox_column(cand.view_mut(), thr, bounds);
            let (mut lin, mut quad, mut new_sq) = (0.0, 0.0, 0.0);
            for p in 0..kt {
                let d = cand[p] - col[p];
                lin += gcol[p] * d;
                quad += d * d;
                new_sq += cand[p] * cand[p];
            }
            let model_new = lin + quad / (2.0 * step) + lambda * new_sq.sqrt();
            let model_old = lambda * old_sq.sqrt();
            if model_new <= model_old {
                for p in 0..kt {
                    col[p] = cand[p];
                }
            }
        }
        self.refresh_residual();
    }

    /// Projected gradient step on `alpha[k, i-1]`.
    pub fn update_alpha(&mut self, k: usize, i: usize) -> Result<()> {
        let (g, lip) = self.problem.grad_alpha_with(&self.vars, &self.cache, k, i);
        self.lipschitz.alpha[k][i - 1] = lip;
        let Some(step) = self.step(lip) else {
            return Ok(());
        };
        let iv = self.problem.config().bounds.alpha[i - 1];
        let new = iv.clamp(self.vars.alpha[[k, i - 1]] - step * g);
        if new == self.vars.alpha[[k, i - 1]] {
            return Ok(());
        }
        self.vars.alpha[[k, i - 1]] = new;
        let op = ConvOperator::new(exp_basis(new, self.problem.timeline())?)?;
        self.cache.kernels.set(k, i, op);
        let m_k = self.vars.m.column(k).to_vec();
        let col = self.cache.kernels.apply(k, i, &m_k);
        self.cache.qs[i].column_mut(k).assign(&Array1::from(col));
        self.refresh_residual();
        Ok(())
    }

    /// One outer iteration over the selected blocks.
    pub fn sweep(&mut self, update_m: bool) -> Result<()> {
        let blocks = self.problem.config().blocks;
        let kt = self.vars.n_tissues();
        let v = self.vars.n_rates();
        if blocks.m && update_m {
            for k in 0..self.vars.n_factors() {
                self.update_m(k);
            }
        }
        if blocks.a {
            self.update_a();
        }
        if blocks.b {
            for i in 0..=v {
                self.update_b(i);
            }
        }
        if blocks.alpha {
            for i in 1..=v {
                for k in 0..kt {
                    self.update_alpha(k, i)?;
                }
            }
        }
        Ok(())
    }
}

/// Runs the alternating proximal scheme from `init` until the relative
/// objective change drops below `epsilon` or `max_iters` is reached.
///
/// The first `warmup_fixed_m_iters` iterations leave the factor TACs
/// untouched and are never counted as convergence.
pub fn palm_run(problem: &PnmmProblem, init: Variables) -> Result<SolverState> {
    let cfg = problem.config();
    let mut ws = PalmWorkspace::new(problem, init)?;
    let mut history = vec![TraceRow {
        iteration: 0,
        terms: ws.terms(),
    }];
    check_finite(&history[0])?;
    if !cfg.blocks.any() {
        return Ok(finish(ws, history, 0, StopReason::NothingToUpdate));
    }
    let mut prev = history[0].terms.total();
    for t in 1..=cfg.max_iters {
        let warmup = t <= cfg.warmup_fixed_m_iters;
        ws.sweep(!warmup)?;
        let row = TraceRow {
            iteration: t,
            terms: ws.terms(),
        };
        check_finite(&row)?;
        let j = row.terms.total();
        history.push(row);
        log::debug!("iteration {t}: objective {j:.6e}");
        let converged = prev == 0.0 || (j - prev).abs() / prev < cfg.epsilon;
        if !warmup && converged {
            return Ok(finish(ws, history, t, StopReason::Converged));
        }
        prev = j;
    }
    Ok(finish(
        ws,
        history,
        cfg.max_iters,
        StopReason::MaxIterations,
    ))
}

fn check_finite(row: &TraceRow) -> Result<()> {
    let j = row.terms.total();
    if j.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "objective became {j} at iteration {} (data {}, smoothness {}, anchor {}, sparsity {})",
            row.iteration,
            row.terms.data,
            row.terms.smoothness,
            row.terms.anchor,
            row.terms.sparsity
        )))
    }
}

fn finish(
    ws: PalmWorkspace<'_>,
    history: Vec<TraceRow>,
    iterations: usize,
    stop: StopReason,
) -> SolverState {
    let lipschitz = ws.lipschitz.clone();
    SolverState {
        vars: ws.into_vars(),
        history,
        iterations,
        lipschitz,
        stop,
    }
}

/// Rates spread geometrically inside the box, fastest first:
/// `hi (lo/hi)^(i/(V+1))`. The first exponential carries the fast
/// (negative) residue of a reversible target tissue, the last the slow one.
pub fn default_rates(n_tissues: usize, bounds: &crate::model::KineticBounds) -> Array2<f64> {
    let v = bounds.n_rates();
    Array2::from_shape_fn((n_tissues, v), |(_, i)| {
        let iv = bounds.alpha[i];
        iv.hi * (iv.lo / iv.hi).powf((i + 1) as f64 / (v + 1) as f64)
    })
}
