use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::model::AcquisitionTimeline;

/// Smallest mask for which the percentile band is used.
pub const MIN_BAND_VOXELS: usize = 10;

/// Initial factor TAC per class: voxel TACs in the mask are ranked by
/// trapezoidal AUC and the ones ranked in the (10 %, 20 %] band are averaged.
/// Masks with fewer than [`MIN_BAND_VOXELS`] voxels use the plain mean.
pub fn init_factors_from_auc(
    y: ArrayView2<f64>,
    masks: &[Vec<bool>],
    timeline: &AcquisitionTimeline,
) -> Result<Array2<f64>> {
    let (l, n) = y.dim();
    if l != timeline.len() {
        return Err(Error::dim("data frames", timeline.len(), l));
    }
    let mut m = Array2::zeros((l, masks.len()));
    for (k, mask) in masks.iter().enumerate() {
        if mask.len() != n {
            return Err(Error::dim("mask length", n, mask.len()));
        }
        let voxels: Vec<usize> = (0..n).filter(|&v| mask[v]).collect();
        if voxels.is_empty() {
            return Err(Error::Domain(format!("class {k} mask is empty")));
        }
        let chosen: Vec<usize> = if voxels.len() < MIN_BAND_VOXELS {
            log::warn!(
                "class {k} has only {} voxels; using the plain mean as initial factor",
                voxels.len()
            );
            voxels
        } else {
            let mut ranked: Vec<(f64, usize)> = voxels
                .iter()
                .map(|&v| (timeline.trapezoid_auc(&y.column(v).to_vec()), v))
                .collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let c = ranked.len() as f64;
            // Ranks r (1-based) with 0.1 c < r <= 0.2 c.
            let lo = (0.1 * c).floor() as usize;
            let hi = ((0.2 * c).floor() as usize).max(lo + 1);
            ranked[lo..hi].iter().map(|&(_, v)| v).collect()
        };
        let mut col = m.column_mut(k);
        for &v in &chosen {
            col += &y.column(v);
        }
        col /= chosen.len() as f64;
    }
    Ok(m)
}

/// Hard proportions from class masks. Every voxel must belong to at least
/// one class; voxels in several classes are split evenly.
pub fn proportions_from_masks(masks: &[Vec<bool>]) -> Result<Array2<f64>> {
    let k = masks.len();
    if k == 0 {
        return Err(Error::Domain("no class masks given".into()));
    }
    let n = masks[0].len();
    if let Some(m) = masks.iter().find(|m| m.len() != n) {
        return Err(Error::dim("mask length", n, m.len()));
    }
    let mut a = Array2::zeros((k, n));
    for v in 0..n {
        let hits: Vec<usize> = (0..k).filter(|&c| masks[c][v]).collect();
        if hits.is_empty() {
            return Err(Error::Domain(format!(
                "voxel {v} is not covered by any class mask"
            )));
        }
        for c in &hits {
            a[[*c, v]] = 1.0 / hits.len() as f64;
        }
    }
    Ok(a)
}
