use ndarray::{Array1, ArrayView1};

use crate::model::GridDims;

/// First-order forward differences along the three lattice axes. The last
/// difference on each axis is zero (replicated edge), so constants are in
/// the null space. Output layout: `[dx; dy; dz]`, each of length `N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialOperator {
    dims: GridDims,
}

impl SpatialOperator {
    pub fn new(dims: GridDims) -> Self {
        Self { dims }
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    /// Calls `f(axis, v, w)` for every forward-difference pair `w = v + stride`
    /// along every axis, skipping the last plane of each axis.
    #[inline]
    fn for_each_pair(&self, mut f: impl FnMut(usize, usize, usize)) {
        let GridDims { nx, ny, nz } = self.dims;
        let plane = nx * ny;
        for z in 0..nz {
            for y in 0..ny {
                let row = z * plane + y * nx;
                for x in 0..nx.saturating_sub(1) {
                    f(0, row + x, row + x + 1);
                }
                if y + 1 < ny {
                    for x in 0..nx {
                        f(1, row + x, row + x + nx);
                    }
                }
                if z + 1 < nz {
                    for x in 0..nx {
                        f(2, row + x, row + x + plane);
                    }
                }
            }
        }
    }

    pub fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let n = self.dims.n_voxels();
        assert_eq!(x.len(), n);
        let mut out = Array1::zeros(3 * n);
        self.for_each_pair(|axis, v, w| out[axis * n + v] = x[w] - x[v]);
        out
    }

    pub fn apply_transpose(&self, y: ArrayView1<f64>) -> Array1<f64> {
        let n = self.dims.n_voxels();
        assert_eq!(y.len(), 3 * n);
        let mut out = Array1::zeros(n);
        self.for_each_pair(|axis, v, w| {
            let d = y[axis * n + v];
            out[w] += d;
            out[v] -= d;
        });
        out
    }

    /// `S^T S x` without forming the difference image.
    pub fn normal(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let n = self.dims.n_voxels();
        assert_eq!(x.len(), n);
        let x = x
            .as_slice()
            .map(|s| s.to_vec())
            .unwrap_or_else(|| x.to_vec());
        let mut out = vec![0.0; n];
        self.for_each_pair(|_, v, w| {
            let d = x[w] - x[v];
            out[w] += d;
            out[v] -= d;
        });
        Array1::from(out)
    }

    /// `1/2 ||S x||^2`.
    pub fn penalty(&self, x: ArrayView1<f64>) -> f64 {
        let x = x
            .as_slice()
            .map(|s| s.to_vec())
            .unwrap_or_else(|| x.to_vec());
        let mut acc = 0.0;
        self.for_each_pair(|_, v, w| {
            let d = x[w] - x[v];
            acc += d * d;
        });
        0.5 * acc
    }

    /// Largest eigenvalue of `S^T S`: a Kronecker sum of path-graph
    /// Laplacians, so the exact value is known in closed form.
    pub fn lambda_max(&self) -> f64 {
        self.dims
            .as_array()
            .iter()
            .filter(|&&n| n > 1)
            .map(|&n| {
                let n = n as f64;
                2.0 - 2.0 * (std::f64::consts::PI * (n - 1.0) / n).cos()
            })
            .sum()
    }
}
