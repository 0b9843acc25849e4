use ndarray::{Array2, ArrayView, ArrayView2, Axis, Dimension};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{binding_potential_map, KineticBounds, KineticNonlinearity};
use crate::solver::Variables;

/// `||est - truth||_F^2 / ||truth||_F^2`.
pub fn nmse<D: Dimension>(est: ArrayView<f64, D>, truth: ArrayView<f64, D>) -> Result<f64> {
    if est.shape() != truth.shape() {
        return Err(Error::dim(
            "estimate shape",
            format!("{:?}", truth.shape()),
            format!("{:?}", est.shape()),
        ));
    }
    nmse_iter(est.iter().copied().zip(truth.iter().copied()))
}

/// NMSE over the `(estimate, truth)` pairs yielded by `pairs`.
pub fn nmse_iter(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<f64> {
    let (mut err, mut energy) = (0.0, 0.0);
    for (e, t) in pairs {
        err += (e - t) * (e - t);
        energy += t * t;
    }
    if !(energy > 0.0) {
        return Err(Error::Domain(
            "NMSE undefined for an all-zero reference".into(),
        ));
    }
    Ok(err / energy)
}

/// Enumerates all permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// Column assignment `perm` minimizing the NMSE of `est[:, perm[k]]`
/// against `truth[:, k]`, by exhaustive search (at most 8 columns).
/// Ties go to the lexicographically first permutation.
pub fn match_factors(est: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<Vec<usize>> {
    if est.dim() != truth.dim() {
        return Err(Error::dim(
            "factor matrix",
            format!("{:?}", truth.dim()),
            format!("{:?}", est.dim()),
        ));
    }
    let k = truth.ncols();
    if k > 8 {
        return Err(Error::Config(format!(
            "factor matching limited to 8 columns, got {k}"
        )));
    }
    // pairwise squared column distances
    let cost = Array2::from_shape_fn((k, k), |(e, t)| {
        est.column(e)
            .iter()
            .zip(truth.column(t))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    });
    let mut best = (f64::INFINITY, (0..k).collect::<Vec<_>>());
    for p in permutations(k) {
        let c: f64 = p.iter().enumerate().map(|(t, &e)| cost[[e, t]]).sum();
        if c < best.0 {
            best = (c, p);
        }
    }
    Ok(best.1)
}

/// How estimated factors are paired with the true ones before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorMatching {
    /// Factor `k` is class `k` (the masks fix class identity).
    #[default]
    Identity,
    /// Tissue factors are reassigned by minimal NMSE; blood stays last.
    Optimal,
}

/// Scored quantities, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variable {
    A,
    M,
    R1,
    Alpha,
    Bp,
}

impl Variable {
    pub const ALL: [Variable; 5] = [
        Variable::A,
        Variable::M,
        Variable::R1,
        Variable::Alpha,
        Variable::Bp,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variable::A => "A",
            Variable::M => "M",
            Variable::R1 => "R1",
            Variable::Alpha => "alpha",
            Variable::Bp => "BP.fT",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// NMSE per variable; `None` where a method does not estimate it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Scores(pub [Option<f64>; 5]);

impl Scores {
    pub fn get(&self, v: Variable) -> Option<f64> {
        self.0[v.index()]
    }

    pub fn set(&mut self, v: Variable, value: f64) {
        self.0[v.index()] = Some(value);
    }
}

/// Tissue voxels: nonzero true proportion of tissue `k`.
fn tissue_support(a_true: ArrayView2<'_, f64>, k: usize) -> impl Iterator<Item = usize> + '_ {
    (0..a_true.ncols()).filter(move |&n| a_true[[k, n]] > 0.0)
}

fn permute_estimate(est: &Variables, perm: &[usize]) -> Variables {
    let kt = est.n_tissues();
    let mut full: Vec<usize> = perm.to_vec();
    full.push(kt);
    Variables {
        m: est.m.select(Axis(1), &full),
        a: est.a.select(Axis(0), &full),
        b: est.b.iter().map(|b| b.select(Axis(0), perm)).collect(),
        alpha: est.alpha.select(Axis(0), perm),
    }
}

fn bp_map(v: &Variables) -> Result<Array2<f64>> {
    // bounds are irrelevant here; only shapes and rates are used
    let bounds = KineticBounds::uniform_b(
        v.n_rates(),
        f64::NEG_INFINITY,
        f64::INFINITY,
        crate::model::Interval::new(0.0, f64::INFINITY),
    );
    let kin = KineticNonlinearity {
        b: v.b.clone(),
        alpha: v.alpha.clone(),
        bounds,
    };
    kin.validate_shapes()?;
    binding_potential_map(&kin)
}

/// `1 + sum_k B_0[k, n]` scored on voxels with any true tissue content.
fn r1_nmse(est: &Variables, truth: &Variables) -> Result<f64> {
    let kt = truth.n_tissues();
    let n = truth.a.ncols();
    let r1 = |v: &Variables, n: usize| 1.0 + (0..kt).map(|k| v.b[0][[k, n]]).sum::<f64>();
    nmse_iter(
        (0..n)
            .filter(|&nn| (0..kt).any(|k| truth.a[[k, nn]] > 0.0))
            .map(|nn| (r1(est, nn), r1(truth, nn))),
    )
}

/// Per-tissue BP maps, each restricted to its tissue support, pooled.
pub fn bp_nmse(bp_est: ArrayView2<f64>, truth: &Variables) -> Result<f64> {
    let bp_true = bp_map(truth)?;
    if bp_est.dim() != bp_true.dim() {
        return Err(Error::dim(
            "BP maps",
            format!("{:?}", bp_true.dim()),
            format!("{:?}", bp_est.dim()),
        ));
    }
    let a = truth.a.view();
    nmse_iter(
        (0..truth.n_tissues())
            .flat_map(|k| tissue_support(a, k).map(move |n| (k, n)))
            .map(|(k, n)| (bp_est[[k, n]], bp_true[[k, n]])),
    )
}

/// NMSE of every variable of a factor/kinetics estimate.
pub fn score_estimate(
    est: &Variables,
    truth: &Variables,
    matching: FactorMatching,
) -> Result<Scores> {
    if est.m.dim() != truth.m.dim()
        || est.a.dim() != truth.a.dim()
        || est.alpha.dim() != truth.alpha.dim()
        || est.b.len() != truth.b.len()
    {
        return Err(Error::dim(
            "estimate",
            "same shapes as the ground truth",
            "different shapes",
        ));
    }
    let kt = truth.n_tissues();
    let perm = match matching {
        FactorMatching::Identity => (0..kt).collect(),
        FactorMatching::Optimal => match_factors(
            est.m.slice(ndarray::s![.., ..kt]),
            truth.m.slice(ndarray::s![.., ..kt]),
        )?,
    };
    let est = permute_estimate(est, &perm);
    let mut s = Scores::default();
    s.set(Variable::A, nmse(est.a.view(), truth.a.view())?);
    s.set(Variable::M, nmse(est.m.view(), truth.m.view())?);
    s.set(Variable::R1, r1_nmse(&est, truth)?);
    s.set(Variable::Alpha, nmse(est.alpha.view(), truth.alpha.view())?);
    s.set(Variable::Bp, bp_nmse(bp_map(&est)?.view(), truth)?);
    Ok(s)
}
