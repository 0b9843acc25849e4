#![allow(dead_code)]

use ndarray::Array2;
use pnmm_core::model::{AcquisitionTimeline, GridDims, Interval, KineticBounds};
use pnmm_core::solver::{PnmmProblem, SolverConfig, Variables};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn small_timeline() -> AcquisitionTimeline {
    AcquisitionTimeline::from_durations(vec![0.5, 0.5, 1.0, 1.0, 2.0, 3.0, 5.0, 8.0]).unwrap()
}

pub fn wide_bounds(v: usize) -> KineticBounds {
    KineticBounds::uniform_b(v, -1.0, 1.0, Interval::new(0.01, 6.0))
}

/// Random feasible instance with L = 8, N = 10 (5 x 2 x 1), K = 3, V = 2.
pub fn random_instance(seed: u64) -> (PnmmProblem, Variables) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (l, n, k, v) = (8, 10, 3, 2);
    let tl = small_timeline();
    let mut rand_mat = |r: usize, c: usize, lo: f64, hi: f64| {
        Array2::from_shape_fn((r, c), |_| rng.random_range(lo..hi))
    };
    let m = rand_mat(l, k, 0.1, 3.0);
    let m0 = rand_mat(l, k, 0.1, 3.0);
    let mut a = rand_mat(k, n, 0.05, 1.0);
    for mut col in a.columns_mut() {
        let s = col.sum();
        col /= s;
    }
    let b: Vec<_> = (0..=v).map(|_| rand_mat(k - 1, n, -0.5, 0.5)).collect();
    let alpha = rand_mat(k - 1, v, 0.05, 2.0);
    let y = rand_mat(l, n, 0.0, 5.0);
    let cfg = SolverConfig {
        eta: 0.3,
        beta: 0.2,
        lambda: 0.1,
        bounds: wide_bounds(v),
        ..SolverConfig::default()
    };
    let problem = PnmmProblem::new(y, GridDims::new(5, 2, 1), tl, m0, cfg).unwrap();
    (problem, Variables { m, a, b, alpha })
}

/// Smooth part of the objective (everything but the group penalty).
pub fn smooth_objective(p: &PnmmProblem, v: &Variables) -> f64 {
    let t = p.evaluate_unchecked(v).unwrap();
    t.data + t.smoothness + t.anchor
}

pub fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let num: f64 = got
        .iter()
        .zip(want)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = want.iter().map(|b| b * b).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

/// Central difference of the smooth objective along one coordinate.
pub fn central_difference(
    p: &PnmmProblem,
    v: &Variables,
    mut perturb: impl FnMut(&mut Variables, f64),
    scale: f64,
) -> f64 {
    let h = 1e-6 * scale.abs().max(1e-3);
    let mut plus = v.clone();
    perturb(&mut plus, h);
    let mut minus = v.clone();
    perturb(&mut minus, -h);
    (smooth_objective(p, &plus) - smooth_objective(p, &minus)) / (2.0 * h)
}

/// Worst relative finite-difference error over every block of an instance.
pub fn worst_gradient_error(p: &PnmmProblem, v: &Variables) -> f64 {
    let (l, k) = v.m.dim();
    let n = v.a.ncols();
    let mut worst: f64 = 0.0;
    for kk in 0..k {
        let (g, _) = p.grad_m(v, kk).unwrap();
        let fd: Vec<f64> = (0..l)
            .map(|ll| central_difference(p, v, |w, h| w.m[[ll, kk]] += h, v.m[[ll, kk]]))
            .collect();
        worst = worst.max(rel_err(g.as_slice().unwrap(), &fd));
    }
    let (ga, _) = p.grad_a(v).unwrap();
    let mut fd = Vec::new();
    for kk in 0..k {
        for nn in 0..n {
            fd.push(central_difference(
                p,
                v,
                |w, h| w.a[[kk, nn]] += h,
                v.a[[kk, nn]],
            ));
        }
    }
    worst = worst.max(rel_err(&ga.iter().copied().collect::<Vec<_>>(), &fd));
    for i in 0..v.b.len() {
        let (gb, _) = p.grad_b(v, i).unwrap();
        let mut fd = Vec::new();
        for kk in 0..k - 1 {
            for nn in 0..n {
                fd.push(central_difference(
                    p,
                    v,
                    |w, h| w.b[i][[kk, nn]] += h,
                    v.b[i][[kk, nn]],
                ));
            }
        }
        worst = worst.max(rel_err(&gb.iter().copied().collect::<Vec<_>>(), &fd));
    }
    for i in 1..v.b.len() {
        for kk in 0..k - 1 {
            let (g, _) = p.grad_alpha(v, kk, i).unwrap();
            let fd =
                central_difference(p, v, |w, h| w.alpha[[kk, i - 1]] += h, v.alpha[[kk, i - 1]]);
            worst = worst.max(rel_err(&[g], &[fd]));
        }
    }
    worst
}

/// Reference curve driving the FRTM oracle: `t e^{-beta t}`.
pub const REF_DECAY: f64 = 0.2;

pub fn reference_curve(t: f64) -> f64 {
    t * (-REF_DECAY * t).exp()
}

/// Target tissue curve of the full reference tissue model obtained by
/// RK4 integration of the two-compartment system. The plasma term is
/// recovered from the reference compartment:
/// `K1 Cp = R1 (dC_R/dt + (k2/R1) C_R)`.
pub fn frtm_target_by_ode(r1: f64, k2: f64, k3: f64, k4: f64, times: &[f64], dt: f64) -> Vec<f64> {
    let drive = |t: f64| {
        let e = (-REF_DECAY * t).exp();
        let dref = e * (1.0 - REF_DECAY * t);
        r1 * dref + k2 * reference_curve(t)
    };
    let rhs = |t: f64, [f, b]: [f64; 2]| [drive(t) - (k2 + k3) * f + k4 * b, k3 * f - k4 * b];
    let mut state = [0.0, 0.0];
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        let steps = ((target - t) / dt).round() as usize;
        let h = (target - t) / steps.max(1) as f64;
        for _ in 0..steps {
            let add = |s: [f64; 2], k: [f64; 2], c: f64| [s[0] + c * k[0], s[1] + c * k[1]];
            let k1 = rhs(t, state);
            let k2_ = rhs(t + 0.5 * h, add(state, k1, 0.5 * h));
            let k3_ = rhs(t + 0.5 * h, add(state, k2_, 0.5 * h));
            let k4_ = rhs(t + h, add(state, k3_, h));
            for j in 0..2 {
                state[j] += h / 6.0 * (k1[j] + 2.0 * k2_[j] + 2.0 * k3_[j] + k4_[j]);
            }
            t += h;
        }
        t = target;
        out.push(state[0] + state[1]);
    }
    out
}

/// `int_0^t e^{-alpha (t - s)} s e^{-beta s} ds` in closed form.
pub fn exp_conv_reference(alpha: f64, t: f64) -> f64 {
    let c = alpha - REF_DECAY;
    ((-REF_DECAY * t).exp() * (c * t - 1.0) + (-alpha * t).exp()) / (c * c)
}

/// Target curve from exponential-form coefficients.
pub fn target_from_coefficients(g: &pnmm_core::phantom::GunnCoefficients, t: f64) -> f64 {
    (1.0 + g.b0) * reference_curve(t)
        + g.b[0] * exp_conv_reference(g.alpha[0], t)
        + g.b[1] * exp_conv_reference(g.alpha[1], t)
}

/// Worst pointwise relative deviation between the ODE and the
/// coefficient form on a uniform 1000-point grid over 90 minutes.
pub fn frtm_oracle_error(r1: f64, k2: f64, k3: f64, k4: f64) -> f64 {
    let g = pnmm_core::phantom::frtm_to_gunn(r1, k2, k3, k4).unwrap();
    let times: Vec<f64> = (1..=1000).map(|j| 0.09 * j as f64).collect();
    let ode = frtm_target_by_ode(r1, k2, k3, k4, &times, 1e-3);
    times
        .iter()
        .zip(&ode)
        .map(|(&t, &o)| (target_from_coefficients(&g, t) - o).abs() / o.abs())
        .fold(0.0, f64::max)
}

/// 16^3 phantom with a short truth pass, for fast tests.
pub fn small_phantom_config() -> pnmm_core::phantom::PhantomConfig {
    use pnmm_core::phantom::{GeometryConfig, PhantomConfig, TruthPassConfig};
    PhantomConfig {
        grid_dims: [16, 16, 16],
        geometry: GeometryConfig {
            white_semi_axes: [0.4, 0.4, 0.4],
            vessel_radius: 2.0,
            lesion_radius: 1.0,
            ..GeometryConfig::default()
        },
        truth: TruthPassConfig {
            max_iters: 40,
            ..TruthPassConfig::default()
        },
        ..PhantomConfig::default()
    }
}

/// Simplex projection through bisection on the shift `tau` in
/// `sum_j max(v_j - tau, 0) = 1`.
pub fn simplex_by_bisection(v: &[f64]) -> Vec<f64> {
    let mass = |tau: f64| v.iter().map(|x| (x - tau).max(0.0)).sum::<f64>();
    let mut lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

/// Sort-based simplex projection: `rho` is the largest index with
/// `u_rho > (sum_{j <= rho} u_j - 1) / rho` on the sorted values.
pub fn simplex_by_sorting(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut rho_sum = 0.0;
    let mut rho = 0;
    for (j, &x) in u.iter().enumerate() {
        cum += x;
        if x - (cum - 1.0) / (j + 1) as f64 > 0.0 {
            rho = j + 1;
            rho_sum = cum;
        }
    }
    let tau = (rho_sum - 1.0) / rho as f64;
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

/// Minimizer of `0.5 |z - v|^2 + t |z|_2` over the box by dense grid
/// search (one or two rows) with resolution `h`.
pub fn prox_by_grid(v: &[f64], t: f64, lo: f64, hi: f64, h: f64) -> Vec<f64> {
    let cost = |z: &[f64]| {
        let d: f64 = z.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
        0.5 * d + t * z.iter().map(|a| a * a).sum::<f64>().sqrt()
    };
    let n = ((hi - lo) / h).round() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| lo + i as f64 * h).chain([0.0]).collect();
    let mut best = (f64::INFINITY, vec![0.0; v.len()]);
    match v.len() {
        1 => {
            for &a in &grid {
                let c = cost(&[a]);
                if c < best.0 {
                    best = (c, vec![a]);
                }
            }
        }
        2 => {
            for &a in &grid {
                for &b in &grid {
                    let c = cost(&[a, b]);
                    if c < best.0 {
                        best = (c, vec![a, b]);
                    }
                }
            }
        }
        _ => panic!("grid oracle supports one or two rows"),
    }
    best.1
}
