//! Small dense helpers: spectral norms of explicit matrices.

use ndarray::{Array1, Array2, ArrayView2};

pub const POWER_TOL: f64 = 1e-6;
pub const POWER_MAX_ITERS: usize = 1000;

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration.
pub fn lambda_max_psd(g: ArrayView2<f64>) -> f64 {
    let n = g.nrows();
    debug_assert_eq!(n, g.ncols());
    if n == 0 {
        return 0.0;
    }
    if n == 1 {
        return g[[0, 0]].max(0.0);
    }
    // Deterministic start that is not orthogonal to typical leading vectors.
    let mut v: Array1<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
    let nv = v.dot(&v).sqrt();
    v /= nv;
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let w = g.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= POWER_TOL * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // One more Rayleigh quotient on the normalized iterate.
    v.dot(&g.dot(&v)).max(lambda).max(0.0)
}

const SMALL_MAX: usize = 8;

/// Largest eigenvalue of a small symmetric matrix by cyclic Jacobi
/// rotations, exact to rounding. Falls back to power iteration above
/// 8 x 8.
pub fn lambda_max_sym_small(g: ArrayView2<f64>) -> f64 {
    let n = g.nrows();
    debug_assert_eq!(n, g.ncols());
    match n {
        0 => return 0.0,
        1 => return g[[0, 0]],
        2 => {
            let (a, b, d) = (g[[0, 0]], 0.5 * (g[[0, 1]] + g[[1, 0]]), g[[1, 1]]);
            return 0.5 * (a + d) + (0.25 * (a - d) * (a - d) + b * b).sqrt();
        }
        _ => {}
    }
    if n > SMALL_MAX {
        return lambda_max_psd(g);
    }
    let mut a = [[0.0f64; SMALL_MAX]; SMALL_MAX];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = 0.5 * (g[[i, j]] + g[[j, i]]);
        }
    }
    lambda_max_sym_fixed(&mut a, n)
}

/// Largest eigenvalue of the leading `n x n` block of a symmetric stack
/// matrix (`n <= 8`). Closed form up to 3 x 3, Jacobi beyond. The block is
/// overwritten.
pub(crate) fn lambda_max_sym_fixed(a: &mut [[f64; SMALL_MAX]; SMALL_MAX], n: usize) -> f64 {
    match n {
        0 => return 0.0,
        1 => return a[0][0],
        2 => {
            let (p, b, d) = (a[0][0], a[0][1], a[1][1]);
            return 0.5 * (p + d) + (0.25 * (p - d) * (p - d) + b * b).sqrt();
        }
        3 => return lambda_max_sym3(a),
        _ => {}
    }
    for _ in 0..50 {
        let mut off = 0.0;
        let mut diag = 0.0;
        for i in 0..n {
            diag += a[i][i] * a[i][i];
            for j in i + 1..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut().take(n) {
                    let (akp, akq) = (row[p], row[q]);
                    row[p] = c * akp - s * akq;
                    row[q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).fold(f64::NEG_INFINITY, f64::max)
}

// Trigonometric solution of the characteristic cubic.
fn lambda_max_sym3(a: &[[f64; SMALL_MAX]; SMALL_MAX]) -> f64 {
    let p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let (d0, d1, d2) = (a[0][0] - q, a[1][1] - q, a[2][2] - q);
    let p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * p1;
    if p2 <= 0.0 {
        return q;
    }
    let p = (p2 / 6.0).sqrt();
    // det((A - qI) / p) / 2
    let det = d0 * (d1 * d2 - a[1][2] * a[1][2]) - a[0][1] * (a[0][1] * d2 - a[1][2] * a[0][2])
        + a[0][2] * (a[0][1] * a[1][2] - d1 * a[0][2]);
    let r = (det / (2.0 * p * p * p)).clamp(-1.0, 1.0);
    q + 2.0 * p * (r.acos() / 3.0).cos()
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(a: ArrayView2<f64>) -> f64 {
    let gram = if a.nrows() <= a.ncols() {
        a.dot(&a.t())
    } else {
        a.t().dot(&a)
    };
    lambda_max_psd(gram.view()).sqrt()
}

pub fn frobenius_sq(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Dense lower-triangular Toeplitz matrix with `kernel` as first column.
pub fn dense_causal_toeplitz(kernel: &[f64]) -> Array2<f64> {
    let n = kernel.len();
    Array2::from_shape_fn((n, n), |(i, j)| if i >= j { kernel[i - j] } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn power_iteration_diagonal() {
        let g = array![[3.0, 0.0], [0.0, 1.0]];
        assert!((lambda_max_psd(g.view()) - 3.0).abs() < 3.0 * POWER_TOL);
    }

    #[test]
    fn jacobi_matches_known_spectra() {
        // eigenvalues of [[2,1,0],[1,2,1],[0,1,2]] are 2 - sqrt2, 2, 2 + sqrt2
        let g = array![[2.0, 1.0, 0.0], [1.0, 2.0, 1.0], [0.0, 1.0, 2.0]];
        assert!((lambda_max_sym_small(g.view()) - (2.0 + 2f64.sqrt())).abs() < 1e-13);
        let g = array![[3.0, 1.0], [1.0, 3.0]];
        assert!((lambda_max_sym_small(g.view()) - 4.0).abs() < 1e-14);
        let g = array![
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 5.0, 0.0, 0.0],
            [0.0, 0.0, 2.0, 0.0],
            [0.0, 0.0, 0.0, 0.0]
        ];
        assert_eq!(lambda_max_sym_small(g.view()), 5.0);
        // rank one u u^T has top eigenvalue |u|^2
        let u = array![1.0, -2.0, 0.5, 3.0, 1.5];
        let g = Array2::from_shape_fn((5, 5), |(i, j)| u[i] * u[j]);
        assert!((lambda_max_sym_small(g.view()) - u.dot(&u)).abs() < 1e-12 * u.dot(&u));
    }

    #[test]
    fn closed_form_3x3_agrees_with_jacobi() {
        // embed the 3 x 3 block in a 4 x 4 with a very negative extra
        // eigenvalue so the Jacobi branch sees the same top eigenvalue
        let mut seed = 0x2545f491u64;
        let mut next = || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed % 2000) as f64 / 1000.0 - 1.0
        };
        for _ in 0..200 {
            let mut a3 = [[0.0; 8]; 8];
            let mut a4 = [[0.0; 8]; 8];
            for i in 0..3 {
                for j in i..3 {
                    let v = next();
                    a3[i][j] = v;
                    a3[j][i] = v;
                    a4[i][j] = v;
                    a4[j][i] = v;
                }
            }
            a4[3][3] = -100.0;
            let c = lambda_max_sym_fixed(&mut a3, 3);
            let j = lambda_max_sym_fixed(&mut a4, 4);
            assert!((c - j).abs() < 1e-10, "{c} vs {j}");
        }
        let mut diag = [[0.0; 8]; 8];
        diag[0][0] = 2.0;
        diag[1][1] = 2.0;
        diag[2][2] = 2.0;
        assert_eq!(lambda_max_sym_fixed(&mut diag, 3), 2.0);
    }

    #[test]
    fn spectral_norm_rank_one() {
        // u v^T has norm |u||v|
        let a = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let expected = (14.0f64).sqrt() * (5.0f64).sqrt();
        assert!((spectral_norm(a.view()) - expected).abs() < 1e-6 * expected);
    }

    #[test]
    fn zero_matrix() {
        assert_eq!(spectral_norm(Array2::<f64>::zeros((3, 4)).view()), 0.0);
    }
}
