use ndarray::{Array2, ArrayView1};

use crate::model::GridDims;
use crate::par;

/// `FWHM / (2 sqrt(2 ln 2))`.
pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
}

/// Normalized sampled Gaussian with half-width `ceil(4 sigma)`; a single
/// tap for `sigma == 0`.
pub fn gaussian_kernel(sigma_vox: f64) -> Vec<f64> {
    if !(sigma_vox > 0.0) {
        return vec![1.0];
    }
    let half = (4.0 * sigma_vox).ceil() as isize;
    let k: Vec<f64> = (-half..=half)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma_vox * sigma_vox)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

fn blur_axis(vol: &mut [f64], tmp: &mut [f64], dims: GridDims, axis: usize, kernel: &[f64]) {
    if kernel.len() == 1 {
        return;
    }
    let half = (kernel.len() / 2) as isize;
    let ext = dims.as_array();
    let len = ext[axis] as isize;
    let stride = [1, dims.nx, dims.nx * dims.ny][axis];
    for v in 0..vol.len() {
        let (x, y, z) = dims.coords(v);
        let pos = [x, y, z][axis] as isize;
        let base = v - pos as usize * stride;
        let mut acc = 0.0;
        for (j, w) in kernel.iter().enumerate() {
            let q = (pos + j as isize - half).clamp(0, len - 1) as usize;
            acc += w * vol[base + q * stride];
        }
        tmp[v] = acc;
    }
    vol.copy_from_slice(tmp);
}

/// Separable Gaussian blur of one volume with replicate padding.
pub fn blur_volume(
    vol: ArrayView1<f64>,
    dims: GridDims,
    fwhm_mm: f64,
    voxel_size_mm: [f64; 3],
) -> Vec<f64> {
    let mut out = vol.to_vec();
    let mut tmp = vec![0.0; out.len()];
    let sigma = fwhm_to_sigma(fwhm_mm);
    for axis in 0..3 {
        let kernel = gaussian_kernel(sigma / voxel_size_mm[axis]);
        blur_axis(&mut out, &mut tmp, dims, axis, &kernel);
    }
    out
}

/// Blurs every frame (row) of an L x N image independently.
pub fn blur_frames(
    x: &Array2<f64>,
    dims: GridDims,
    fwhm_mm: f64,
    voxel_size_mm: [f64; 3],
) -> Array2<f64> {
    let rows = par::map_indices(x.nrows(), |l| {
        blur_volume(x.row(l), dims, fwhm_mm, voxel_size_mm)
    });
    let mut out = Array2::zeros(x.dim());
    for (l, row) in rows.into_iter().enumerate() {
        out.row_mut(l).assign(&ndarray::Array1::from(row));
    }
    out
}
