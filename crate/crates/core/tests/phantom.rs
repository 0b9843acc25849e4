mod common;

use common::{frtm_oracle_error, small_phantom_config};
use pnmm_core::model::{reconstruct, FactorModel, KineticNonlinearity, FEAS_TOL};
use pnmm_core::phantom::{assemble_phantom, frtm_to_gunn, PhantomConfig};
use proptest::prelude::*;

#[test]
fn exponential_form_matches_integrated_frtm() {
    for (r1, k2) in [(1.0, 0.4), (1.6, 0.4), (1.0, 0.3), (1.6, 0.3)] {
        let err = frtm_oracle_error(r1, k2, 0.15, 0.01);
        assert!(err < 1e-6, "R1 {r1}, k2 {k2}: {err:e}");
    }
}

#[test]
fn oracle_detects_a_wrong_coefficient() {
    let mut g = frtm_to_gunn(1.6, 0.4, 0.15, 0.01).unwrap();
    let times: Vec<f64> = (1..=100).map(|j| 0.9 * j as f64).collect();
    let ode = common::frtm_target_by_ode(1.6, 0.4, 0.15, 0.01, &times, 1e-3);
    g.b[1] *= 1.001;
    let worst = times
        .iter()
        .zip(&ode)
        .map(|(&t, &o)| (common::target_from_coefficients(&g, t) - o).abs() / o)
        .fold(0.0, f64::max);
    assert!(worst > 1e-5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn binding_potential_identity(r1 in 0.2..3.0f64, k2 in 0.01..1.0f64, k3 in 0.0..1.0f64, k4 in 0.001..0.5f64) {
        let g = frtm_to_gunn(r1, k2, k3, k4).unwrap();
        let bp = g.binding_potential();
        prop_assert!((bp - k3 / k4).abs() <= 1e-10 * (k3 / k4).max(1.0), "{bp} vs {}", k3 / k4);
        prop_assert!((g.alpha[0] + g.alpha[1] - (k2 + k3 + k4)).abs() < 1e-12 * (k2 + k3 + k4));
        prop_assert!((g.alpha[0] * g.alpha[1] - k2 * k4).abs() < 1e-12 * k2 * k4.max(1e-3));
        prop_assert!((g.delivery_ratio() - r1).abs() < 1e-15 * r1.max(1.0) * 4.0);
    }
}

#[test]
fn phantom_is_deterministic() {
    let cfg = small_phantom_config();
    let a = assemble_phantom(&cfg, 5).unwrap();
    let b = assemble_phantom(&cfg, 5).unwrap();
    assert_eq!(a.noisy, b.noisy);
    assert_eq!(a.a, b.a);
    assert_eq!(a.b, b.b);
    assert_eq!(a.masks, b.masks);
    let c = assemble_phantom(&cfg, 6).unwrap();
    assert_eq!(a.noiseless, c.noiseless);
    assert_ne!(a.noisy, c.noisy);
}

#[test]
fn masks_partition_the_grid() {
    let t = assemble_phantom(&small_phantom_config(), 1).unwrap();
    let m = &t.masks;
    for v in 0..t.dims.n_voxels() {
        let classes = [m.gray[v], m.white[v], m.blood[v]];
        assert_eq!(classes.iter().filter(|&&c| c).count(), 1, "voxel {v}");
        assert!(!m.lesion_gray[v] || m.gray[v]);
        assert!(!m.lesion_white[v] || m.white[v]);
        assert_eq!(
            m.lesion_level[v].is_some(),
            m.lesion_gray[v] || m.lesion_white[v]
        );
    }
    for lesion in m.lesions() {
        assert!(lesion.iter().any(|&l| l));
    }
}

#[test]
fn hard_coefficients_satisfy_the_binding_identity() {
    let t = assemble_phantom(&small_phantom_config(), 1).unwrap();
    let expected = 0.15 / 0.01;
    for (tissue, lesion) in t.masks.lesions().into_iter().enumerate() {
        for v in (0..t.dims.n_voxels()).filter(|&v| lesion[v]) {
            let bp = t.b_hard[0][[tissue, v]]
                + t.b_hard[1][[tissue, v]] / t.alpha[[tissue, 0]]
                + t.b_hard[2][[tissue, v]] / t.alpha[[tissue, 1]];
            assert!(
                (bp - expected).abs() < 1e-8 * expected,
                "tissue {tissue} voxel {v}: {bp}"
            );
        }
        for v in (0..t.dims.n_voxels()).filter(|&v| !lesion[v]) {
            assert!(t.b_hard.iter().all(|b| b[[tissue, v]] == 0.0));
        }
    }
}

#[test]
fn truth_pass_keeps_lesions_brightest() {
    let t = assemble_phantom(&small_phantom_config(), 1).unwrap();
    for (tissue, lesion) in t.masks.lesions().into_iter().enumerate() {
        let row = t.bp.row(tissue);
        let (argmax, _) = row
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (v, &x)| if x > acc.1 { (v, x) } else { acc },
            );
        assert!(
            lesion[argmax],
            "tissue {tissue}: brightest voxel {argmax} outside the lesion"
        );
        let inside: Vec<f64> = (0..row.len())
            .filter(|&v| lesion[v])
            .map(|v| row[v])
            .collect();
        let outside_max = (0..row.len())
            .filter(|&v| !lesion[v])
            .map(|v| row[v])
            .fold(0.0, f64::max);
        let inside_mean = inside.iter().sum::<f64>() / inside.len() as f64;
        assert!(
            inside_mean > outside_max,
            "tissue {tissue}: {inside_mean} vs {outside_max}"
        );
    }
}

#[test]
fn truth_proportions_are_on_the_simplex() {
    let t = assemble_phantom(&small_phantom_config(), 1).unwrap();
    for col in t.a.columns() {
        assert!(col.iter().all(|&x| x >= -FEAS_TOL));
        assert!((col.sum() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn noise_off_and_blur_off_are_exact() {
    let cfg = PhantomConfig {
        snr_db: f64::INFINITY,
        psf_fwhm_mm: 0.0,
        ..small_phantom_config()
    };
    let t = assemble_phantom(&cfg, 1).unwrap();
    assert_eq!(t.noisy, t.noiseless);
    let kin =
        KineticNonlinearity::new(t.b_hard.clone(), t.alpha.clone(), cfg.truth_bounds()).unwrap();
    let model = FactorModel::new(t.m.clone(), t.a_hard.clone()).unwrap();
    let sharp = reconstruct(&model, &kin, &t.timeline).unwrap();
    assert_eq!(sharp, t.noiseless);
}

#[test]
fn realized_snr_matches_injected_noise() {
    let t = assemble_phantom(&small_phantom_config(), 2).unwrap();
    assert!(
        (t.realized_snr_db - 20.0).abs() < 0.1,
        "{}",
        t.realized_snr_db
    );
    // independent estimate of sigma on entries far above zero (no clipping)
    let power = t.noiseless.iter().map(|x| x * x).sum::<f64>() / t.noiseless.len() as f64;
    let sigma = (power / 100.0).sqrt();
    let residuals: Vec<f64> = t
        .noisy
        .iter()
        .zip(&t.noiseless)
        .filter(|(_, &x)| x > 6.0 * sigma)
        .map(|(y, x)| y - x)
        .collect();
    assert!(residuals.len() > 1000);
    let est = (residuals.iter().map(|e| e * e).sum::<f64>() / residuals.len() as f64).sqrt();
    assert!((est / sigma - 1.0).abs() < 0.05, "{est} vs {sigma}");
}

#[test]
fn default_timeline_and_tacs() {
    let cfg = PhantomConfig::default();
    let tl = cfg.timeline().unwrap();
    assert_eq!(tl.len(), 27);
    assert!((tl.total_duration() - 90.0).abs() < 1e-12);
    let m = pnmm_core::phantom::generate_factor_tacs(&cfg.arterial_input, cfg.gray, cfg.white, &tl);
    let blood = m.column(2);
    let peak = (0..27)
        .max_by(|&i, &j| blood[i].total_cmp(&blood[j]))
        .unwrap();
    assert!(tl.mid_times()[peak] < 2.0);
    let (g, w) = (m.column(0), m.column(1));
    let corr = g.dot(&w) / (g.dot(&g) * w.dot(&w)).sqrt();
    assert!(corr < 0.999, "{corr}");
    let auc = |c: usize| tl.trapezoid_auc(&m.column(c).to_vec());
    assert!(auc(2) < auc(0) && auc(2) < auc(1));
    assert!(m.iter().all(|&x| x >= 0.0));
}

#[test]
fn undersized_grid_is_rejected() {
    let cfg = PhantomConfig {
        grid_dims: [16, 16, 8],
        ..small_phantom_config()
    };
    assert!(assemble_phantom(&cfg, 1).unwrap_err().is_usage());
}
