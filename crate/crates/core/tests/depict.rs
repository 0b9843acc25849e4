use ndarray::{Array1, Array2};
use pnmm_core::depict::{depict_bp_map, DepictConfig, DepictFitter, DepictSolver};
use pnmm_core::model::{exp_basis, AcquisitionTimeline, ConvOperator, Interval};
use pnmm_core::phantom::{
    default_frame_durations, frtm_to_gunn, generate_factor_tacs, PhantomConfig,
};
use proptest::prelude::*;

fn timeline() -> AcquisitionTimeline {
    AcquisitionTimeline::from_durations(default_frame_durations()).unwrap()
}

fn reference(tl: &AcquisitionTimeline) -> Vec<f64> {
    let cfg = PhantomConfig::default();
    generate_factor_tacs(&cfg.arterial_input, cfg.gray, cfg.white, tl)
        .column(0)
        .to_vec()
}

fn conv(rate: f64, x: &[f64], tl: &AcquisitionTimeline) -> Array1<f64> {
    Array1::from(
        ConvOperator::new(exp_basis(rate, tl).unwrap())
            .unwrap()
            .apply(x)
            .unwrap(),
    )
}

fn frtm_voxel(m_ref: &[f64], r1: f64, tl: &AcquisitionTimeline) -> Array1<f64> {
    let g = frtm_to_gunn(r1, 0.4, 0.15, 0.01).unwrap();
    let mut x = Array1::from(m_ref.to_vec()) * (1.0 + g.b0);
    for j in 0..2 {
        x = x + conv(g.alpha[j], m_ref, tl) * g.b[j];
    }
    x
}

#[test]
fn reference_fits_itself_with_zero_coefficients() {
    let tl = timeline();
    let m = reference(&tl);
    let cfg = DepictConfig::default();
    let f = DepictFitter::new(cfg.basis(&m, &tl).unwrap(), &cfg).unwrap();
    let fit = f.fit(Array1::from(m.clone()).view()).unwrap();
    assert!(fit.coeffs.iter().all(|c| *c == 0.0));
    assert_eq!(f.grid().binding_potential(&fit.coeffs), 0.0);
}

#[test]
fn zero_data_gives_zero_coefficients() {
    let tl = timeline();
    let m = reference(&tl);
    let cfg = DepictConfig::default();
    let f = DepictFitter::new(cfg.basis(&m, &tl).unwrap(), &cfg).unwrap();
    let fit = f.fit(Array1::zeros(tl.len()).view()).unwrap();
    assert!(fit.coeffs.iter().all(|c| *c == 0.0));
}

#[test]
fn on_grid_coefficient_is_recovered_without_penalty() {
    let tl = timeline();
    let m = reference(&tl);
    let cfg = DepictConfig {
        rate_min: 0.05,
        rate_max: 1.0,
        n_basis: 4,
        tolerance: 0.0,
        max_iters: 200_000,
        solver: DepictSolver::Accelerated,
        ..DepictConfig::default()
    };
    let f = DepictFitter::new(cfg.basis(&m, &tl).unwrap(), &cfg).unwrap();
    let c = 0.07;
    let col = 2;
    let x = Array1::from(m.clone()) + f.grid().design.column(col).to_owned() * c;
    let fit = f.fit_with_lambda(x.view(), 0.0).unwrap();
    for (j, b) in fit.coeffs.iter().enumerate() {
        let expected = if j == col { c } else { 0.0 };
        assert!((b - expected).abs() < 1e-6, "coefficient {j}: {b}");
    }
}

#[test]
fn proximal_gradient_objective_is_monotone() {
    let tl = timeline();
    let m = reference(&tl);
    let x = frtm_voxel(&m, 1.6, &tl);
    let mut last = f64::INFINITY;
    for iters in 1..60 {
        let cfg = DepictConfig {
            tolerance: 0.0,
            max_iters: iters,
            ..DepictConfig::default()
        };
        let f = DepictFitter::new(cfg.basis(&m, &tl).unwrap(), &cfg).unwrap();
        let obj = f.fit(x.view()).unwrap().objective;
        assert!(
            obj <= last * (1.0 + 1e-12),
            "iteration {iters}: {obj} > {last}"
        );
        last = obj;
    }
}

#[test]
fn specific_binding_region_separates_from_background() {
    let tl = timeline();
    let m = reference(&tl);
    let sb = frtm_voxel(&m, 1.0, &tl);
    let mut data = Array2::zeros((tl.len(), 6));
    for n in 0..6 {
        let col = if n < 3 {
            sb.clone()
        } else {
            Array1::from(m.clone())
        };
        data.column_mut(n).assign(&col);
    }
    let maps = depict_bp_map(data.view(), &m, &tl, &DepictConfig::default()).unwrap();
    assert_eq!(maps.failures, 0);
    let sb_bp = maps.bp[..3].iter().cloned().fold(f64::INFINITY, f64::min);
    let bg_bp = maps.bp[3..].iter().cloned().fold(0.0f64, f64::max);
    assert!(sb_bp > 0.0);
    assert!(sb_bp >= 10.0 * bg_bp, "SB {sb_bp} vs background {bg_bp}");
}

#[test]
fn map_matches_independent_fits_and_flags_bad_voxels() {
    let tl = timeline();
    let m = reference(&tl);
    let cfg = DepictConfig::default();
    let f = DepictFitter::new(cfg.basis(&m, &tl).unwrap(), &cfg).unwrap();
    let mut data = Array2::zeros((tl.len(), 4));
    for (n, r1) in [1.0, 1.3, 1.6].iter().enumerate() {
        data.column_mut(n).assign(&frtm_voxel(&m, *r1, &tl));
    }
    data[[5, 3]] = f64::NAN;
    let maps = depict_bp_map(data.view(), &m, &tl, &cfg).unwrap();
    for n in 0..3 {
        let fit = f.fit(data.column(n)).unwrap();
        assert_eq!(maps.bp[n], f.grid().binding_potential(&fit.coeffs));
        assert_eq!(maps.r1[n], f.grid().delivery_ratio(&fit.coeffs));
    }
    assert!(maps.bp[3].is_nan());
    assert_eq!(maps.failures, 1);

    // single voxel image reduces to one fit
    let one = depict_bp_map(data.slice(ndarray::s![.., 1..2]), &m, &tl, &cfg).unwrap();
    assert_eq!(one.bp, vec![maps.bp[1]]);
}

#[test]
fn bad_configs_are_rejected() {
    let tl = timeline();
    let m = reference(&tl);
    let mut cfg = DepictConfig {
        rate_min: 1.0,
        rate_max: 0.5,
        ..DepictConfig::default()
    };
    assert!(cfg.basis(&m, &tl).is_err());
    cfg = DepictConfig {
        offset_bounds: Interval::new(1.0, 0.0),
        ..DepictConfig::default()
    };
    assert!(cfg.validate().is_err());
    assert!(DepictConfig::default().basis(&m[..5], &tl).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bp_invariant_to_common_rescaling(scale in 0.05f64..20.0, r1 in 1.0f64..1.6) {
        let tl = timeline();
        let m = reference(&tl);
        let x = frtm_voxel(&m, r1, &tl);
        let cfg = DepictConfig { solver: DepictSolver::Accelerated, ..DepictConfig::default() };
        let fit_bp = |x: &Array1<f64>, m: &[f64]| {
            let f = DepictFitter::new(cfg.basis(m, &tl).unwrap(), &cfg).unwrap();
            let fit = f.fit(x.view()).unwrap();
            f.grid().binding_potential(&fit.coeffs)
        };
        let base = fit_bp(&x, &m);
        let ms: Vec<f64> = m.iter().map(|v| v * scale).collect();
        let scaled = fit_bp(&(&x * scale), &ms);
        prop_assert!((base - scaled).abs() <= 1e-4 * base.abs().max(1.0), "{base} vs {scaled}");
    }
}
