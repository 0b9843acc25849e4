use ndarray::{s, Array2, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::model::{
    exp_basis, AcquisitionTimeline, ConvOperator, FactorModel, KineticNonlinearity,
};
use crate::par;

/// Convolution operators `E_ki` for every tissue `k` and rate index
/// `i = 1..V`. `E_k0` is the identity and is not stored.
#[derive(Debug, Clone)]
pub struct KernelSet {
    ops: Vec<Vec<ConvOperator>>,
}

impl KernelSet {
    pub fn new(alpha: ArrayView2<f64>, timeline: &AcquisitionTimeline) -> Result<Self> {
        let ops = alpha
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .map(|&a| ConvOperator::new(exp_basis(a, timeline)?))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { ops })
    }

    /// `E_ki` for `i >= 1`.
    pub fn op(&self, k: usize, i: usize) -> &ConvOperator {
        &self.ops[k][i - 1]
    }

    pub fn set(&mut self, k: usize, i: usize, op: ConvOperator) {
        self.ops[k][i - 1] = op;
    }

    /// `E_ki m`, with `E_k0 = I`.
    pub fn apply(&self, k: usize, i: usize, m: &[f64]) -> Vec<f64> {
        if i == 0 {
            return m.to_vec();
        }
        let mut out = vec![0.0; m.len()];
        self.op(k, i).apply_into(m, &mut out);
        out
    }

    /// `E_ki^T y`, with `E_k0 = I`.
    pub fn apply_transpose(&self, k: usize, i: usize, y: &[f64]) -> Vec<f64> {
        if i == 0 {
            return y.to_vec();
        }
        let mut out = vec![0.0; y.len()];
        self.op(k, i).apply_transpose_into(y, &mut out);
        out
    }

    /// Dense `E_ki` (identity for `i = 0`).
    pub fn dense(&self, k: usize, i: usize, len: usize) -> Array2<f64> {
        if i == 0 {
            Array2::eye(len)
        } else {
            self.op(k, i).to_dense()
        }
    }
}

/// `Q_i = [E_1i m_1, ..., E_(K-1)i m_(K-1)]`; `Q_0` is the tissue factor
/// matrix itself.
pub fn build_q(
    m_tissue: ArrayView2<f64>,
    i: usize,
    alpha: ArrayView2<f64>,
    timeline: &AcquisitionTimeline,
) -> Result<Array2<f64>> {
    let (l, kt) = m_tissue.dim();
    if l != timeline.len() {
        return Err(Error::dim("factor TAC length", timeline.len(), l));
    }
    if alpha.nrows() != kt {
        return Err(Error::dim("rate rows", kt, alpha.nrows()));
    }
    if i > alpha.ncols() {
        return Err(Error::dim(
            "basis index",
            format!("<= {}", alpha.ncols()),
            i,
        ));
    }
    if i == 0 {
        return Ok(m_tissue.to_owned());
    }
    let mut q = Array2::zeros((l, kt));
    for k in 0..kt {
        let op = ConvOperator::new(exp_basis(alpha[[k, i - 1]], timeline)?)?;
        let col: Vec<f64> = m_tissue.column(k).to_vec();
        let out = op.apply(&col)?;
        q.column_mut(k).assign(&ndarray::Array1::from(out));
    }
    Ok(q)
}

/// All `Q_0..Q_V` from a kernel set.
pub fn build_all_q(m_tissue: ArrayView2<f64>, kernels: &KernelSet, v: usize) -> Vec<Array2<f64>> {
    let (l, kt) = m_tissue.dim();
    (0..=v)
        .map(|i| {
            let mut q = Array2::zeros((l, kt));
            for k in 0..kt {
                let col = m_tissue.column(k).to_vec();
                q.column_mut(k)
                    .assign(&ndarray::Array1::from(kernels.apply(k, i, &col)));
            }
            q
        })
        .collect()
}

/// PNMM prediction `X = M A + sum_i Q_i (A~ o B_i)`.
pub fn reconstruct(
    model: &FactorModel,
    kin: &KineticNonlinearity,
    timeline: &AcquisitionTimeline,
) -> Result<Array2<f64>> {
    let (l, k) = model.m.dim();
    if l != timeline.len() {
        return Err(Error::dim("factor TAC length", timeline.len(), l));
    }
    if model.a.nrows() != k {
        return Err(Error::dim("proportion rows", k, model.a.nrows()));
    }
    kin.validate_shapes()?;
    if kin.b[0].dim() != (k - 1, model.a.ncols()) {
        return Err(Error::dim(
            "coefficient matrix shape",
            format!("{:?}", (k - 1, model.a.ncols())),
            format!("{:?}", kin.b[0].dim()),
        ));
    }
    let kernels = KernelSet::new(kin.alpha.view(), timeline)?;
    let qs = build_all_q(model.m_tissue(), &kernels, kin.n_rates());
    Ok(reconstruct_with_q(
        model.m.view(),
        model.a.view(),
        &kin.b,
        &qs,
    ))
}

/// Same as [`reconstruct`] with precomputed `Q_i`.
pub fn reconstruct_with_q(
    m: ArrayView2<f64>,
    a: ArrayView2<f64>,
    b: &[Array2<f64>],
    qs: &[Array2<f64>],
) -> Array2<f64> {
    let basis = stacked_basis(m, qs);
    par::collect_columns(m.nrows(), a.ncols(), |r| {
        basis.dot(&stacked_coefficients(a, b, r))
    })
}

/// `Y - X` computed chunk by chunk without forming `X`.
pub(crate) fn residual_with_q(
    y: ArrayView2<f64>,
    m: ArrayView2<f64>,
    a: ArrayView2<f64>,
    b: &[Array2<f64>],
    qs: &[Array2<f64>],
) -> Array2<f64> {
    let basis = stacked_basis(m, qs);
    par::collect_columns(m.nrows(), a.ncols(), |r| {
        let mut out = y.slice(s![.., r.clone()]).to_owned();
        ndarray::linalg::general_mat_mul(
            -1.0,
            &basis,
            &stacked_coefficients(a, b, r),
            1.0,
            &mut out,
        );
        out
    })
}

/// `[M | Q_0 | ... | Q_V]`, L x (K + (V+1)(K-1)).
pub(crate) fn stacked_basis(m: ArrayView2<f64>, qs: &[Array2<f64>]) -> Array2<f64> {
    let mut views = vec![m];
    views.extend(qs.iter().map(|q| q.view()));
    ndarray::concatenate(ndarray::Axis(1), &views).expect("row counts agree")
}

/// `[A; A~ o B_0; ...; A~ o B_V]` restricted to the voxel range `r`.
pub(crate) fn stacked_coefficients(
    a: ArrayView2<f64>,
    b: &[Array2<f64>],
    r: std::ops::Range<usize>,
) -> Array2<f64> {
    let k = a.nrows();
    let kt = k - 1;
    let a_c = a.slice(s![.., r.clone()]);
    let mut out = Array2::zeros((k + b.len() * kt, r.len()));
    out.slice_mut(s![..k, ..]).assign(&a_c);
    for (i, bi) in b.iter().enumerate() {
        let mut dst = out.slice_mut(s![k + i * kt..k + (i + 1) * kt, ..]);
        Zip::from(&mut dst)
            .and(a_c.slice(s![..kt, ..]))
            .and(bi.slice(s![.., r.clone()]))
            .for_each(|d, &a, &b| *d = a * b);
    }
    out
}

/// Delivery ratio `R1 = 1 + B_0`, one row per tissue.
pub fn delivery_ratio_map(kin: &KineticNonlinearity) -> Array2<f64> {
    kin.b[0].mapv(|b| 1.0 + b)
}

/// `BP.f_T = B_0 + sum_i B_i / alpha_i`, one row per tissue.
pub fn binding_potential_map(kin: &KineticNonlinearity) -> Result<Array2<f64>> {
    binding_potential_raw(&kin.b, kin.alpha.view())
}

fn binding_potential_raw(b: &[Array2<f64>], alpha: ArrayView2<f64>) -> Result<Array2<f64>> {
    if let Some(a) = alpha.iter().find(|a| !(**a > 0.0)) {
        return Err(Error::Domain(format!(
            "binding potential needs reversible kinetics (all rates > 0), found {a}"
        )));
    }
    let mut bp = b[0].clone();
    for (i, bi) in b.iter().enumerate().skip(1) {
        for (k, mut row) in bp.rows_mut().into_iter().enumerate() {
            let rate = alpha[[k, i - 1]];
            row.zip_mut_with(&bi.row(k), |acc, &v| *acc += v / rate);
        }
    }
    Ok(bp)
}
