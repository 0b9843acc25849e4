use ndarray::{Array2, ArrayView1, ArrayViewMut1, Axis};

use crate::error::{Error, Result};
use crate::model::Interval;

/// Entrywise `max(x, 0)`.
pub fn project_nonneg(m: &Array2<f64>) -> Array2<f64> {
    m.mapv(|v| v.max(0.0))
}

/// Euclidean projection of a vector onto the unit simplex, sort-based.
pub fn project_simplex(v: ArrayView1<f64>) -> Vec<f64> {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

/// Projects each column onto the unit simplex.
pub fn project_simplex_columns(a: &Array2<f64>) -> Array2<f64> {
    let mut out = a.clone();
    project_simplex_columns_inplace(&mut out);
    out
}

pub(crate) fn project_simplex_columns_inplace(a: &mut Array2<f64>) {
    for mut col in a.axis_iter_mut(Axis(1)) {
        let p = project_simplex(col.view());
        col.iter_mut().zip(p).for_each(|(c, v)| *c = v);
    }
}

/// Block soft-thresholding of every column, then the box clamp. With 0 in
/// the box this is the exact prox of `t |c|_2` plus the box indicator for
/// one row, and whenever the shrunk column already lies in the box.
pub fn prox_b(b: &Array2<f64>, threshold: f64, bounds: Interval) -> Result<Array2<f64>> {
    if !(bounds.lo <= 0.0 && bounds.hi >= 0.0) {
        return Err(Error::Config(format!(
            "coefficient box [{}, {}] must contain 0",
            bounds.lo, bounds.hi
        )));
    }
    if !(threshold >= 0.0) {
        return Err(Error::Config(format!(
            "threshold must be >= 0, got {threshold}"
        )));
    }
    let mut out = b.clone();
    for col in out.axis_iter_mut(Axis(1)) {
        prox_column(col, threshold, bounds);
    }
    Ok(out)
}

pub(crate) fn prox_column(mut col: ArrayViewMut1<f64>, threshold: f64, bounds: Interval) {
    if threshold > 0.0 {
        let norm = col.dot(&col).sqrt();
        let scale = if norm <= threshold {
            0.0
        } else {
            1.0 - threshold / norm
        };
        col.mapv_inplace(|v| v * scale);
    }
    col.mapv_inplace(|v| bounds.clamp(v));
}
